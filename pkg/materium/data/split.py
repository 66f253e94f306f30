"""
@file split.py
@brief Deterministic train/validation split.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple, TypeVar

import numpy as np

from ..core.errors import ConfigError, TooSmall

T = TypeVar("T")


def split_corpus(records: Sequence[T], train_frac: float = 0.9, seed: int = 0) -> Tuple[List[T], List[T]]:
    """
    @brief Seeded shuffle, then the first round(n · train_frac) items go to training.
    @return (train, val), disjoint and together exhaustive
    @throws ConfigError unless 0 < train_frac < 1
    @throws TooSmall if either side would be empty
    """
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must be in (0, 1), got {train_frac}")
    n = len(records)
    n_train = int(round(n * train_frac))
    if n_train == 0 or n_train == n:
        raise TooSmall(f"cannot split {n} record(s) with train_frac={train_frac}: one side would be empty")
    order = np.random.default_rng(seed).permutation(n)
    train = [records[i] for i in order[:n_train]]
    val = [records[i] for i in order[n_train:]]
    return train, val
