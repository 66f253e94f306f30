"""
@file swiglu.py
@brief SwiGLU feed-forward block: down( silu(x·W_gate) ⊙ (x·W_up) ).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .baselayer import BaseLayer, ForwardContext, Shapes, accumulate


def swiglu_ffn(x: np.ndarray, w_gate: np.ndarray, w_up: np.ndarray, w_down: np.ndarray) -> np.ndarray:
    g = x @ w_gate
    return (g * expit(g) * (x @ w_up)) @ w_down


class SwiGLU(BaseLayer):
    """
    @class SwiGLU
    @brief Bias-free gated FFN with hidden width d_ffn_hidden.
    """

    def __init__(self, prefix: str, d_emb: int, d_hidden: int) -> None:
        super().__init__(prefix)
        self.d_emb = d_emb
        self.d_hidden = d_hidden

    def param_shapes(self) -> Shapes:
        d, f = self.d_emb, self.d_hidden
        return {self.key("w_gate"): (d, f), self.key("w_up"): (d, f), self.key("w_down"): (f, d)}

    def forward(self, params, x, ctx: ForwardContext):
        g = x @ params[self.key("w_gate")]
        u = x @ params[self.key("w_up")]
        s = expit(g)
        act = g * s
        h = act * u
        return h @ params[self.key("w_down")], (x, g, u, s, act, h)

    def backward(self, params, dy, cache, grads):
        x, g, u, s, act, h = cache
        D, F = self.d_emb, self.d_hidden
        accumulate(grads, self.key("w_down"), h.reshape(-1, F).T @ dy.reshape(-1, D))
        dh = dy @ params[self.key("w_down")].T
        du = dh * act
        dg = dh * u * (s + g * s * (1.0 - s))
        xf = x.reshape(-1, D)
        accumulate(grads, self.key("w_gate"), xf.T @ dg.reshape(-1, F))
        accumulate(grads, self.key("w_up"), xf.T @ du.reshape(-1, F))
        return dg @ params[self.key("w_gate")].T + du @ params[self.key("w_up")].T
