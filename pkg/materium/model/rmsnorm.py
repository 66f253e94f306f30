"""
@file rmsnorm.py
@brief Root-mean-square normalization with a learned gain: x / sqrt(mean(x²) + ε) ⊙ gain.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .baselayer import BaseLayer, ForwardContext, Params, Shapes, accumulate

NORM_EPS = 1e-6


def rmsnorm_forward(x: np.ndarray, gain: np.ndarray, eps: float = NORM_EPS):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    xhat = x * r
    return xhat * gain, (xhat, r)


def rmsnorm_backward(dy: np.ndarray, gain: np.ndarray, cache) -> Tuple[np.ndarray, np.ndarray]:
    """@return (dx, dgain)"""
    xhat, r = cache
    dgain = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * gain
    dx = r * (dxhat - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
    return dx, dgain


def rmsnorm(x: np.ndarray, gain: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    return rmsnorm_forward(x, gain, eps)[0]


class RMSNorm(BaseLayer):
    """
    @class RMSNorm
    @brief One gain vector stored under the full key @p name (e.g. `layers.0.attn_norm`).
    """

    def __init__(self, name: str, dim: int, eps: float = NORM_EPS) -> None:
        super().__init__(name)
        self.dim = dim
        self.eps = eps

    def param_shapes(self) -> Shapes:
        return {self.prefix: (self.dim,)}

    def init_params(self, rng, std) -> Params:
        return {self.prefix: np.ones(self.dim)}

    def forward(self, params, x, ctx: ForwardContext):
        return rmsnorm_forward(x, params[self.prefix], self.eps)

    def backward(self, params, dy, cache, grads):
        dx, dgain = rmsnorm_backward(dy, params[self.prefix], cache)
        accumulate(grads, self.prefix, dgain)
        return dx
