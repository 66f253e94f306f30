"""
@file hhi.py
@brief Compound-level Herfindahl-Hirschman Index and its adherence to HHI targets.

@details
The compound score is the atom-fraction weighted mean of the per-element HHI values,
Σ (count_e / N) · HHI_e. A per-element-max variant (`mode="max"`) scores a compound by its scarcest
element instead. Adherence compares scores on the condition scale (HHI / 1000).
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence, Union

from ..core.crystal import Crystal, composition
from ..core.elements import ElementTables, default_tables
from ..core.errors import ConfigError, UnknownElement
from ..data.corpus import GeneratedSample
from ..data.transforms import HHI_SCALE
from .baseeval import BaseEval, grouped_adherence, valid_samples

HHI_MODES = ("fraction", "max")

HHITable = Union[ElementTables, Mapping[str, float]]


def _lookup(table: HHITable, symbol: str) -> float:
    if isinstance(table, ElementTables):
        return table.hhi(symbol)
    try:
        return float(table[symbol])
    except KeyError:
        raise UnknownElement(f"no HHI value for element {symbol!r}") from None


def hhi_of_crystal(c: Crystal, element_hhi_table: Optional[HHITable] = None, mode: str = "fraction") -> float:
    """
    @brief HHI score of a crystal in raw table units.
    @param mode "fraction" (atom-fraction weighted mean) or "max" (scarcest element)
    @throws UnknownElement if an element has no tabulated HHI
    """
    if mode not in HHI_MODES:
        raise ConfigError(f"unknown HHI mode {mode!r}; expected one of {HHI_MODES}")
    table = element_hhi_table if element_hhi_table is not None else default_tables()
    counts = composition(c)
    if mode == "max":
        return max(_lookup(table, e) for e in counts)
    n = sum(counts.values())
    return sum(k / n * _lookup(table, e) for e, k in counts.items())


class HHIAdherence(BaseEval):
    """
    @class HHIAdherence
    @brief Per-target summary of generated HHI scores, both on the /1000 condition scale.
    """

    name = "HHIAdherence"

    def __init__(self, tables: Optional[ElementTables] = None, mode: str = "fraction") -> None:
        super().__init__()
        if mode not in HHI_MODES:
            raise ConfigError(f"unknown HHI mode {mode!r}; expected one of {HHI_MODES}")
        self.tables = tables or default_tables()
        self.mode = mode

    def scores(self, samples: Sequence[GeneratedSample]) -> list:
        """@return scaled scores of every valid sample whose elements are all tabulated."""
        out = []
        for s in valid_samples(samples):
            try:
                out.append(hhi_of_crystal(s.record.crystal, self.tables, self.mode) / HHI_SCALE)
            except UnknownElement:
                continue
        return out

    def eval(self, samples: Sequence[GeneratedSample]):
        pairs = []
        for s in valid_samples(samples):
            target = s.targets.get("hhi")
            if target is None:
                continue
            try:
                score = hhi_of_crystal(s.record.crystal, self.tables, self.mode)
            except UnknownElement:
                continue
            pairs.append((float(target) / HHI_SCALE, score / HHI_SCALE))
        return grouped_adherence(pairs)
