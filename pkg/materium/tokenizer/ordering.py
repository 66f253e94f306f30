"""
@file ordering.py
@brief Site ordering strategies used before tokenization.

@details
- LowFirst  : ascending (atomic number, x, y, z)
- HighFirst : descending atomic number, then ascending (x, y, z)
- XYZ       : ascending (x, y, z), then atomic number
- Random    : seeded permutation; one fixed permutation per material (seed mixed with a material key)
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.crystal import Site
from ..core.elements import ElementTables, default_tables
from ..core.errors import ConfigError

STRATEGIES = ("LowFirst", "HighFirst", "XYZ", "Random")


@dataclass(frozen=True)
class OrderingStrategy:
    """
    @class OrderingStrategy
    @brief One of LowFirst, HighFirst, XYZ or Random(seed).
    """

    name: str = "HighFirst"
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown ordering strategy {self.name!r}; expected one of {STRATEGIES}")
        if self.name == "Random" and self.seed is None:
            raise ConfigError("Random ordering needs an explicit seed")

    @classmethod
    def parse(cls, text: Union[str, "OrderingStrategy"]) -> "OrderingStrategy":
        """@brief Parse `LowFirst`, `HighFirst`, `XYZ`, `Random(7)` or `Random:7`."""
        if isinstance(text, OrderingStrategy):
            return text
        text = text.strip()
        if text.startswith("Random"):
            rest = text[len("Random"):].strip("():")
            if not rest:
                raise ConfigError("Random ordering needs an explicit seed, e.g. Random(0)")
            try:
                return cls("Random", int(rest))
            except ValueError:
                raise ConfigError(f"Random ordering seed must be an integer, got {rest!r}") from None
        return cls(text)

    @classmethod
    def from_details(cls, details: Dict[str, Any]) -> "OrderingStrategy":
        """@brief Build from a run config entry such as `{"name": "Random", "args": {"seed": 7}}`."""
        name = details["name"]
        seed = (details.get("args") or {}).get("seed")
        if name == "Random" and seed is not None:
            return cls("Random", int(seed))
        return cls.parse(name)

    def __str__(self) -> str:
        return f"Random({self.seed})" if self.name == "Random" else self.name


def material_seed(seed: int, key: str) -> int:
    """@brief Stable per-material seed so every material keeps one permutation for a whole run."""
    return (int(seed) * 1_000_003 + zlib.crc32(key.encode("utf-8"))) % (2 ** 32)


def order_sites(sites: Sequence[Site], s: OrderingStrategy, tables: Optional[ElementTables] = None,
                key: str = "") -> List[Site]:
    """
    @brief Return @p sites in the order prescribed by @p s.
    @param key material identifier mixed into the Random seed
    """
    tables = tables or default_tables()
    sites = list(sites)
    if s.name == "LowFirst":
        return sorted(sites, key=lambda x: (tables.atomic_number(x.element), *x.frac))
    if s.name == "HighFirst":
        return sorted(sites, key=lambda x: (-tables.atomic_number(x.element), *x.frac))
    if s.name == "XYZ":
        return sorted(sites, key=lambda x: (*x.frac, tables.atomic_number(x.element)))
    rng = np.random.default_rng(material_seed(s.seed, key))
    return [sites[i] for i in rng.permutation(len(sites))]
