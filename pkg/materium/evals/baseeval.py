"""
@file baseeval.py
@brief Base class for metrics over generated sets.

@details
Provides a common interface for evaluation of a list of generated samples, plus the shared summary
helpers used by the adherence metrics.
"""

from __future__ import annotations

import logging
from abc import ABC
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.crystal import Crystal
from ..data.corpus import GeneratedSample

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.75, 0.95)


class BaseEval(ABC):
    """
    @class BaseEval
    @brief Abstract base for evaluating generated sets.

    @details
    Responsibilities:
    - Defines the `eval()` interface used by all metric classes.
    - Metrics over an empty valid subset return None (absent), never zero.

    @note Subclasses must implement @ref eval().
    """

    name = "BaseEval"

    def __init__(self) -> None:
        logger.debug("initializing evaluation %s", self.name)

    def eval(self, samples: Sequence[GeneratedSample]) -> Any:
        """
        @brief Compute the metric over a generated set.
        @param samples generated samples (valid and invalid)
        @return the metric value, or None when nothing valid is available
        @throws NotImplementedError If a subclass does not override this method.
        """
        raise NotImplementedError("Subclasses must implement eval()")


def valid_samples(samples: Sequence[GeneratedSample]) -> List[GeneratedSample]:
    return [s for s in samples if s.grammar_valid and s.record is not None]


def valid_crystals(samples: Sequence[GeneratedSample]) -> List[Crystal]:
    return [s.record.crystal for s in valid_samples(samples)]


def adherence_summary(values: Sequence[float], target: float) -> Dict[str, Any]:
    """@return {target, n, mean, median, mae, q05, q25, q75, q95} of @p values against @p target."""
    arr = np.asarray(values, dtype=float)
    out: Dict[str, Any] = {"target": float(target), "n": int(arr.size)}
    if arr.size == 0:
        out.update(mean=None, median=None, mae=None, **{f"q{int(q * 100):02d}": None for q in QUANTILES})
        return out
    out["mean"] = float(arr.mean())
    out["median"] = float(np.median(arr))
    out["mae"] = float(np.abs(arr - target).mean())
    for q in QUANTILES:
        out[f"q{int(q * 100):02d}"] = float(np.quantile(arr, q))
    return out


def grouped_adherence(pairs: Sequence[Tuple[float, float]]) -> Optional[Dict[str, Dict[str, Any]]]:
    """
    @brief Group (target, value) pairs by target and summarize each group.
    @return {str(target): summary} in ascending target order, or None for no pairs
    """
    if not pairs:
        return None
    frame = pd.DataFrame(pairs, columns=["target", "value"])
    out = {}
    for target, group in frame.groupby("target", sort=True):
        out[_key(target)] = adherence_summary(group["value"].to_numpy(), float(target))
    return out


def histogram(values: Sequence[float], bins: int = 20) -> List[Tuple[float, int]]:
    """@return (left bin edge, count) pairs; the last edge closes the range with count 0."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return [(float(e), int(c)) for e, c in zip(edges[:-1], counts)] + [(float(edges[-1]), 0)]


def _key(target: float) -> str:
    return repr(float(target))
