"""
@file validity.py
@brief Grammar validity and charge neutrality counts of a generated set.
"""

from __future__ import annotations

from typing import Any, Dict, Sequence

from ..data.corpus import GeneratedSample
from .baseeval import BaseEval


class Validity(BaseEval):
    """
    @class Validity
    @brief Counts grammar-valid and charge-neutral samples; fractions are over all samples.
    """

    name = "Validity"

    def eval(self, samples: Sequence[GeneratedSample]) -> Dict[str, Any]:
        n_total = len(samples)
        n_valid = sum(1 for s in samples if s.grammar_valid)
        n_neutral = sum(1 for s in samples if s.grammar_valid and s.charge_neutral)
        return {
            "n_total": n_total,
            "n_grammar_valid": n_valid,
            "n_charge_neutral": n_neutral,
            "frac_valid": n_valid / n_total if n_total else None,
            "frac_charge_neutral": n_neutral / n_total if n_total else None,
        }
