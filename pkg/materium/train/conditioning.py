"""
@file conditioning.py
@brief Random omission of conditions during training, so any subset can be supplied at generation time.
"""

from __future__ import annotations

import numpy as np

from ..core.errors import ConfigError
from ..data.transforms import CONDITION_NAMES
from ..model.conditions import ConditionSet


def apply_conditional_dropout(cs: ConditionSet, p: float, rng: np.random.Generator) -> ConditionSet:
    """
    @brief Drop each present condition independently with probability @p p; the formula is one unit.
    @note Draws happen in schema order, then one draw for the formula, so the RNG stream is reproducible.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"condition dropout probability must be in [0, 1], got {p}")
    if p == 0.0 or cs.is_empty:
        return cs
    dropped = [name for name in CONDITION_NAMES if name in cs.values and rng.random() < p]
    drop_formula = cs.formula is not None and rng.random() < p
    if not dropped and not drop_formula:
        return cs
    return cs.drop(dropped, formula=drop_formula)
