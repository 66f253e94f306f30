"""
@file novelty.py
@brief Fraction of generated crystals absent from the training set.
"""

from __future__ import annotations

from typing import AbstractSet, Iterable, Optional, Sequence, Set

from ..core.crystal import Crystal, canonical_fingerprint
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, valid_crystals


def training_fingerprints(crystals: Iterable[Crystal], site_tol: float = 1e-2, param_tol: float = 1e-2) -> Set[str]:
    return {canonical_fingerprint(c, site_tol, param_tol) for c in crystals}


def novelty(crystals: Sequence[Crystal], training_fingerprint_set: AbstractSet[str],
            site_tol: float = 1e-2, param_tol: float = 1e-2) -> Optional[float]:
    """
    @brief Fraction of @p crystals whose fingerprint is not in @p training_fingerprint_set.
    @return None for an empty input; 1.0 against an empty training set
    """
    if not crystals:
        return None
    novel = sum(1 for c in crystals if canonical_fingerprint(c, site_tol, param_tol) not in training_fingerprint_set)
    return novel / len(crystals)


class Novelty(BaseEval):
    name = "Novelty"

    def __init__(self, training: AbstractSet[str] = frozenset(), site_tol: float = 1e-2,
                 param_tol: float = 1e-2) -> None:
        super().__init__()
        self.training = training
        self.site_tol = site_tol
        self.param_tol = param_tol

    def eval(self, samples: Sequence[GeneratedSample]) -> Optional[float]:
        return novelty(valid_crystals(samples), self.training, self.site_tol, self.param_tol)
