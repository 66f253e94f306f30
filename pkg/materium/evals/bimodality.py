"""
@file bimodality.py
@brief Histogram plus the sample bimodality coefficient of a value distribution.

@details
The coefficient is (skewness² + 1) / kurtosis with bias-corrected sample skewness and (non-excess)
kurtosis. Values above 5/9 (the uniform distribution's coefficient) suggest bimodality. Constant
input has undefined moments and is reported as non-bimodal with no coefficient.
"""

from __future__ import annotations

from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.stats import kurtosis, skew

from ..core.errors import TooFewSamples
from ..data.corpus import GeneratedSample
from .baseeval import BaseEval, histogram
from .hhi import HHIAdherence

BIMODALITY_THRESHOLD = 5.0 / 9.0
MIN_SAMPLES = 10


def bimodality_coefficient(values: Sequence[float]) -> Optional[float]:
    arr = np.asarray(values, dtype=float)
    if arr.size < 4 or np.ptp(arr) == 0.0:
        return None
    g = skew(arr, bias=False)
    k = kurtosis(arr, fisher=False, bias=False)
    if not np.isfinite(g) or not np.isfinite(k) or k <= 0:
        return None
    return float((g * g + 1.0) / k)


def bimodality_summary(values: Sequence[float], bins: int = 20) -> Dict[str, Any]:
    """
    @brief Fixed-bin histogram, bimodality coefficient and the verdict against 5/9.
    @throws TooFewSamples for fewer than 10 values
    """
    arr = np.asarray(values, dtype=float)
    if arr.size < MIN_SAMPLES:
        raise TooFewSamples(f"bimodality needs at least {MIN_SAMPLES} values, got {arr.size}")
    coef = bimodality_coefficient(arr)
    return {
        "n": int(arr.size),
        "histogram": histogram(arr, bins),
        "coefficient": coef,
        "threshold": BIMODALITY_THRESHOLD,
        "bimodal": bool(coef is not None and coef > BIMODALITY_THRESHOLD),
    }


class HHIBimodality(BaseEval):
    """
    @class HHIBimodality
    @brief Bimodality summary of the (scaled) HHI scores of the valid samples.
    """

    name = "HHIBimodality"

    def __init__(self, tables=None, mode: str = "fraction", bins: int = 20) -> None:
        super().__init__()
        self.scorer = HHIAdherence(tables, mode)
        self.bins = bins

    def eval(self, samples: Sequence[GeneratedSample]):
        scores = self.scorer.scores(samples)
        if len(scores) < MIN_SAMPLES:
            return None
        return bimodality_summary(scores, self.bins)
