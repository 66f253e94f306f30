"""
@file attention.py
@brief Causal multi-head self-attention with RoPE: softmax(QKᵀ/√d_k + M) V.

@details
Exact softmax attention (no approximations). The additive mask M holds 0 on and below the diagonal
and −inf above it, so position i only reads positions 0..i. For incremental decoding the mask is
offset by the number of cached positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import softmax

from .baselayer import BaseLayer, ForwardContext, Shapes, accumulate
from .rope import rope_backward, rotate


def causal_mask(n_queries: int, n_keys: Optional[int] = None, offset: int = 0) -> np.ndarray:
    """
    @brief Additive mask (n_queries, n_keys); query i sits at absolute position offset + i.
    """
    n_keys = n_queries + offset if n_keys is None else n_keys
    q = np.arange(n_queries)[:, None] + offset
    k = np.arange(n_keys)[None, :]
    return np.where(k <= q, 0.0, -np.inf)


def masked_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                     mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    @brief Scaled dot-product attention.
    @param Q (..., T, d_k), K and V (..., S, d_k)
    @param mask additive (T, S) mask; causal when None
    @return (output (..., T, d_k), row-stochastic weights (..., T, S))
    """
    if mask is None:
        mask = causal_mask(Q.shape[-2], K.shape[-2], K.shape[-2] - Q.shape[-2])
    scores = Q @ np.swapaxes(K, -1, -2) / np.sqrt(Q.shape[-1]) + mask
    weights = softmax(scores, axis=-1)
    return weights @ V, weights


@dataclass
class LayerKV:
    """@brief Rotated keys and values of one layer for one sequence, shape (1, H, S, d_head)."""

    k: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return 0 if self.k is None else self.k.shape[2]

    def append(self, k: np.ndarray, v: np.ndarray) -> None:
        self.k = k if self.k is None else np.concatenate([self.k, k], axis=2)
        self.v = v if self.v is None else np.concatenate([self.v, v], axis=2)


class MultiHeadAttention(BaseLayer):
    """
    @class MultiHeadAttention
    @brief Projections wq, wk, wv, wo (no biases) under the prefix `layers.{i}`.
    """

    def __init__(self, prefix: str, d_emb: int, n_heads: int) -> None:
        super().__init__(prefix)
        self.d_emb = d_emb
        self.n_heads = n_heads
        self.d_head = d_emb // n_heads

    def param_shapes(self) -> Shapes:
        d = self.d_emb
        return {self.key(n): (d, d) for n in ("wq", "wk", "wv", "wo")}

    def _split(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        B, H, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)

    def forward(self, params, x, ctx: ForwardContext):
        q = rotate(self._split(x @ params[self.key("wq")]), ctx.cos, ctx.sin)
        k = rotate(self._split(x @ params[self.key("wk")]), ctx.cos, ctx.sin)
        v = self._split(x @ params[self.key("wv")])
        a, w = masked_attention(q, k, v, ctx.mask)
        merged = self._merge(a)
        out = merged @ params[self.key("wo")]
        return out, (x, q, k, v, w, merged, ctx.cos, ctx.sin)

    def backward(self, params, dy, cache, grads):
        x, q, k, v, w, merged, cos, sin = cache
        D = self.d_emb
        scale = 1.0 / np.sqrt(self.d_head)
        accumulate(grads, self.key("wo"), merged.reshape(-1, D).T @ dy.reshape(-1, D))
        da = self._split(dy @ params[self.key("wo")].T)

        dw = da @ np.swapaxes(v, -1, -2)
        dv = np.swapaxes(w, -1, -2) @ da
        dscores = w * (dw - np.sum(dw * w, axis=-1, keepdims=True))
        dq = rope_backward(dscores @ k * scale, cos, sin)
        dk = rope_backward(np.swapaxes(dscores, -1, -2) @ q * scale, cos, sin)

        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        xf = x.reshape(-1, D)
        accumulate(grads, self.key("wq"), xf.T @ dq.reshape(-1, D))
        accumulate(grads, self.key("wk"), xf.T @ dk.reshape(-1, D))
        accumulate(grads, self.key("wv"), xf.T @ dv.reshape(-1, D))
        return (dq @ params[self.key("wq")].T + dk @ params[self.key("wk")].T
                + dv @ params[self.key("wv")].T)

    def forward_cached(self, params, x: np.ndarray, kv: LayerKV, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
        """
        @brief Eval-mode attention for new positions of one sequence, reading and extending @p kv.
        @param x (1, t, D) inputs of the new positions
        @param cos, sin RoPE tables of the new positions' absolute indices
        """
        offset = kv.length
        q = rotate(self._split(x @ params[self.key("wq")]), cos, sin)
        k = rotate(self._split(x @ params[self.key("wk")]), cos, sin)
        v = self._split(x @ params[self.key("wv")])
        kv.append(k, v)
        mask = causal_mask(x.shape[1], kv.length, offset)
        a, _ = masked_attention(q, kv.k, kv.v, mask)
        return self._merge(a) @ params[self.key("wo")]
