"""
@file loss.py
@brief Next-token cross-entropy restricted to material-token predictions.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from ..core.errors import EmptyTargets

IGNORE_INDEX = -100


def build_targets(prefix_lens: Sequence[int], tokens: Sequence[Sequence[int]], T: int) -> np.ndarray:
    """
    @brief Target id per position of a right-padded batch; IGNORE_INDEX where no loss applies.

    @details
    With a prefix of length P > 0, positions P−1 .. P+L−2 predict tokens 0..L−1 (the last prefix
    position predicts the first material token). Without a prefix, positions 0..L−2 predict tokens 1..L−1.
    @throws EmptyTargets if a sequence has fewer than 2 tokens
    """
    targets = np.full((len(tokens), T), IGNORE_INDEX, dtype=np.int64)
    for b, (P, seq) in enumerate(zip(prefix_lens, tokens)):
        L = len(seq)
        if L < 2:
            raise EmptyTargets(f"sequence {b} has {L} token(s); at least 2 are needed for a next-token loss")
        if P > 0:
            targets[b, P - 1:P + L - 1] = seq
        else:
            targets[b, :L - 1] = seq[1:]
    return targets


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    @brief Mean cross-entropy over positions whose target is not IGNORE_INDEX.
    @param logits (..., V)
    @param targets (...) integer ids or IGNORE_INDEX
    @return (loss, dloss/dlogits); gradient rows are exactly zero at ignored positions
    @throws EmptyTargets if every position is ignored
    """
    V = logits.shape[-1]
    flat = logits.reshape(-1, V)
    tgt = targets.reshape(-1)
    valid = tgt != IGNORE_INDEX
    n = int(valid.sum())
    if n == 0:
        raise EmptyTargets("no positions carry a target")
    rows = flat[valid]
    picked = rows[np.arange(n), tgt[valid]]
    loss = float(np.mean(logsumexp(rows, axis=-1) - picked))

    dflat = np.zeros_like(flat)
    grad = softmax(rows, axis=-1)
    grad[np.arange(n), tgt[valid]] -= 1.0
    dflat[valid] = grad / n
    return loss, dflat.reshape(logits.shape)


def masked_ce_loss(logits: np.ndarray, tokens: Sequence[int], prefix_len: int) -> float:
    """
    @brief Loss of one sequence whose logits cover prefix and material positions.
    @param logits (prefix_len + L, V)
    """
    targets = build_targets([prefix_len], [tokens], logits.shape[0])[0]
    return cross_entropy(logits, targets)[0]


def token_accuracy(logits: np.ndarray, targets: np.ndarray) -> float:
    """@brief Fraction of targeted positions whose argmax equals the target."""
    valid = targets != IGNORE_INDEX
    if not valid.any():
        raise EmptyTargets("no positions carry a target")
    return float(np.mean(np.argmax(logits, axis=-1)[valid] == targets[valid]))
