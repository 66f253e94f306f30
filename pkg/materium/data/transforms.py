"""
@file transforms.py
@brief Normalization of raw material properties into model condition values.

@details
- band_gap, magnetic_density : ln(x + 1e-3)   (x ≥ 0)
- hhi                        : x / 1000
- density, space_group       : identity

Every transform is strictly monotone on its domain, so it has an exact inverse.
"""

from __future__ import annotations

import math
from typing import Dict, Mapping

from ..core.errors import DataError, NegativeValue, UnknownCondition

CONDITION_NAMES = ("band_gap", "magnetic_density", "density", "space_group", "hhi")
LOG_CONDITIONS = ("band_gap", "magnetic_density")
LOG_OFFSET = 1e-3
HHI_SCALE = 1000.0


def transform_condition(name: str, raw: float) -> float:
    """
    @brief Map a raw property value onto the scale the model is conditioned on.
    @throws NegativeValue for a negative band gap or magnetic density
    @throws UnknownCondition for a name outside @ref CONDITION_NAMES
    """
    if name not in CONDITION_NAMES:
        raise UnknownCondition(f"unknown condition {name!r}; expected one of {CONDITION_NAMES}")
    value = float(raw)
    if not math.isfinite(value):
        raise DataError(f"condition {name} must be finite, got {raw!r}")
    if name in LOG_CONDITIONS:
        if value < 0:
            raise NegativeValue(f"{name} must be >= 0 for the log transform, got {value}")
        return math.log(value + LOG_OFFSET)
    if name == "hhi":
        return value / HHI_SCALE
    return value


def inverse_transform(name: str, value: float) -> float:
    if name not in CONDITION_NAMES:
        raise UnknownCondition(f"unknown condition {name!r}")
    if name in LOG_CONDITIONS:
        return math.exp(value) - LOG_OFFSET
    if name == "hhi":
        return value * HHI_SCALE
    return float(value)


def transform_properties(raw: Mapping[str, float]) -> Dict[str, float]:
    """@brief Transform every recognised, non-null property; other keys are ignored."""
    return {k: transform_condition(k, v) for k, v in raw.items() if k in CONDITION_NAMES and v is not None}
