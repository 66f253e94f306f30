"""
@file uniqueness.py
@brief Fraction of structurally distinct crystals in a generated set.
"""

from __future__ import annotations

from typing import Optional, Sequence

from ..core.crystal import Crystal, canonical_fingerprint
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, valid_crystals


def uniqueness(crystals: Sequence[Crystal], site_tol: float = 1e-2, param_tol: float = 1e-2) -> Optional[float]:
    """
    @brief |distinct canonical fingerprints| / n.
    @return None for an empty input
    """
    if not crystals:
        return None
    prints = {canonical_fingerprint(c, site_tol, param_tol) for c in crystals}
    return len(prints) / len(crystals)


class Uniqueness(BaseEval):
    name = "Uniqueness"

    def __init__(self, site_tol: float = 1e-2, param_tol: float = 1e-2) -> None:
        super().__init__()
        self.site_tol = site_tol
        self.param_tol = param_tol

    def eval(self, samples: Sequence[GeneratedSample]) -> Optional[float]:
        return uniqueness(valid_crystals(samples), self.site_tol, self.param_tol)
