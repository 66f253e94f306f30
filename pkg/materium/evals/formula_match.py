"""
@file formula_match.py
@brief Reduced-formula match rate and the most frequent generated formulas per target.
"""

from __future__ import annotations

from collections import Counter
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from ..core.crystal import Crystal, Formula, formula_string, normalize_formula, parse_formula, reduced_formula
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, valid_samples

FormulaLike = Union[str, Sequence[Tuple[str, int]]]


def canonical_formula(target: FormulaLike) -> Formula:
    """@brief Parse (if needed), merge, GCD-reduce and sort a formula."""
    pairs = parse_formula(target) if isinstance(target, str) else target
    return normalize_formula(pairs)


def formula_match_rate(pairs: Sequence[Tuple[Crystal, FormulaLike]]) -> Optional[float]:
    """
    @brief Fraction of crystals whose reduced formula equals the normalized target.
    @return None when @p pairs is empty
    """
    if not pairs:
        return None
    hits = sum(1 for c, t in pairs if reduced_formula(c) == canonical_formula(t))
    return hits / len(pairs)


def top_k_formulas(pairs: Sequence[Tuple[Crystal, FormulaLike]], k: int = 3) -> Dict[str, Dict[str, Any]]:
    """
    @return per target: the @p k most frequent generated reduced formulas with counts, and whether the
            target is among the top 1, 2, ..., k
    """
    groups: Dict[str, Counter] = {}
    for c, t in pairs:
        key = formula_string(canonical_formula(t))
        groups.setdefault(key, Counter())[formula_string(reduced_formula(c))] += 1
    out = {}
    for target, counter in sorted(groups.items()):
        # ties broken alphabetically for determinism
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        names = [f for f, _ in ranked]
        entry: Dict[str, Any] = {"top": [[f, n] for f, n in ranked], "n": sum(counter.values())}
        for i in range(1, k + 1):
            entry[f"in_top_{i}"] = target in names[:i]
        out[target] = entry
    return out


class FormulaMatch(BaseEval):
    name = "FormulaMatch"

    def __init__(self, k: int = 3) -> None:
        super().__init__()
        self.k = k

    def _pairs(self, samples):
        return [(s.record.crystal, s.targets["formula"]) for s in valid_samples(samples)
                if s.targets.get("formula")]

    def eval(self, samples: Sequence[GeneratedSample]):
        pairs = self._pairs(samples)
        if not pairs:
            return None
        return {"match_rate": formula_match_rate(pairs), "top_k": top_k_formulas(pairs, self.k)}
