"""
@file density_adherence.py
@brief How closely generated densities follow their density targets.
"""

from __future__ import annotations

from typing import Any, Dict, Optional, Sequence, Tuple

from ..core.crystal import Crystal, density
from ..core.elements import ElementTables, default_tables
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, grouped_adherence, valid_samples


def density_adherence(pairs: Sequence[Tuple[Crystal, float]],
                      tables: Optional[ElementTables] = None) -> Optional[Dict[str, Dict[str, Any]]]:
    """
    @brief Per-target mean/median/MAE/quantiles of computed density against the target.
    @param pairs (crystal, target density in g/cm³)
    @return {target: summary}, or None when @p pairs is empty
    """
    tables = tables or default_tables()
    return grouped_adherence([(float(t), density(c, tables)) for c, t in pairs])


class DensityAdherence(BaseEval):
    name = "DensityAdherence"

    def __init__(self, tables: Optional[ElementTables] = None) -> None:
        super().__init__()
        self.tables = tables or default_tables()

    def eval(self, samples: Sequence[GeneratedSample]):
        pairs = [(s.record.crystal, s.targets["density"]) for s in valid_samples(samples)
                 if s.targets.get("density") is not None]
        return density_adherence(pairs, self.tables)
