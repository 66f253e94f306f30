"""
@file quantize.py
@brief Quantization of fractional coordinates and lattice parameters into 1024 shared bins.

@details
Bins are half-open, `bin = floor(v * 1024)`, and dequantize to bin centres `(bin + 0.5) / 1024`,
so the worst-case round-trip error is 1/2048. Lattice parameters are first mapped linearly from
their fixed range onto [0, 1); values outside the range are clamped and flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Dict, Tuple

from ..core.errors import ConfigError, OutOfRange
from .vocab import N_BINS

LATTICE_NAMES = ("a", "b", "c", "alpha", "beta", "gamma")


@dataclass(frozen=True)
class LatticeRanges:
    """
    @class LatticeRanges
    @brief Fixed (min, max) normalization range per lattice parameter.
    """

    a: Tuple[float, float] = (2.0, 10.0)
    b: Tuple[float, float] = (2.0, 12.5)
    c: Tuple[float, float] = (2.0, 20.0)
    alpha: Tuple[float, float] = (60.0, 120.0)
    beta: Tuple[float, float] = (60.0, 120.0)
    gamma: Tuple[float, float] = (60.0, 120.0)

    def __post_init__(self) -> None:
        for name in LATTICE_NAMES:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"lattice range for {name} must satisfy min < max, got ({lo}, {hi})")

    def range_of(self, name: str) -> Tuple[float, float]:
        if name not in LATTICE_NAMES:
            raise KeyError(f"unknown lattice parameter {name!r}")
        return getattr(self, name)

    def to_dict(self) -> Dict[str, list]:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "LatticeRanges":
        return cls(**{k: tuple(v) for k, v in data.items()})


def quantize_frac(v: float) -> int:
    """
    @brief floor(v · 1024), clamped to ≤ 1023.
    @throws OutOfRange if v < 0 or v ≥ 1
    """
    if not (0.0 <= v < 1.0):
        raise OutOfRange(f"fractional value {v} outside [0, 1)")
    return min(int(math.floor(v * N_BINS)), N_BINS - 1)


def dequantize_frac(b: int) -> float:
    """
    @brief Bin centre (b + 0.5) / 1024.
    @throws OutOfRange if b is not in 0..1023
    """
    if not 0 <= b < N_BINS:
        raise OutOfRange(f"bin {b} outside 0..{N_BINS - 1}")
    return (b + 0.5) / N_BINS


def quantize_lattice_param(name: str, value: float, ranges: LatticeRanges) -> Tuple[int, bool]:
    """
    @brief Quantize one lattice parameter against its fixed range.
    @return (bin, clamped) where clamped is True when @p value fell outside [min, max]
    """
    lo, hi = ranges.range_of(name)
    u = (float(value) - lo) / (hi - lo)
    clamped = value < lo or value > hi
    if u < 0.0:
        return 0, clamped
    if u >= 1.0:
        return N_BINS - 1, clamped
    return quantize_frac(u), clamped


def dequantize_lattice_param(name: str, b: int, ranges: LatticeRanges) -> float:
    lo, hi = ranges.range_of(name)
    return lo + dequantize_frac(b) * (hi - lo)
