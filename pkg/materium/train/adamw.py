"""
@file adamw.py
@brief AdamW with decoupled weight decay, and global-norm gradient clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

Params = Dict[str, np.ndarray]


def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grad_norm(grads: Params, max_norm: Optional[float]) -> float:
    """
    @brief Scale @p grads in place so their global L2 norm is at most @p max_norm.
    @return the norm before clipping
    """
    norm = global_norm(grads)
    if max_norm is not None and max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdamW:
    """
    @class AdamW
    @brief Per-tensor first/second moments; decay applies to tensors with ndim ≥ 2 only.

    @details
        p ← p − lr·wd·p
        m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
        p ← p − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β1ᵗ),  v̂ = v/(1−β2ᵗ)
    """

    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01

    def init_state(self, params: Params) -> Tuple[Params, Params]:
        return ({k: np.zeros_like(p) for k, p in params.items()},
                {k: np.zeros_like(p) for k, p in params.items()})

    def step(self, params: Params, grads: Params, m: Params, v: Params, t: int, lr: float) -> None:
        """
        @brief In-place update of @p params, @p m and @p v for step number @p t (1-based).
        @note lr = 0 leaves @p params bit-identical.
        """
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for name, p in params.items():
            g = grads[name]
            m[name] = b1 * m[name] + (1.0 - b1) * g
            v[name] = b2 * v[name] + (1.0 - b2) * g * g
            if lr == 0.0:
                continue
            if self.weight_decay and p.ndim >= 2:
                p -= lr * self.weight_decay * p
            p -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + self.eps)
