"""
@file rope.py
@brief Rotary positional embeddings on interleaved pairs (2i, 2i+1).

@details
Pair i at position p is rotated by the angle p · base^(−2i / d_head). The rotation is orthogonal, so
its backward pass is the rotation by the negative angle.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..core.errors import OddHeadDim

ROPE_BASE = 10000.0


def rope_tables(positions, head_dim: int, base: float = ROPE_BASE) -> Tuple[np.ndarray, np.ndarray]:
    """
    @return (cos, sin), each of shape (len(positions), head_dim / 2)
    @throws OddHeadDim if @p head_dim is odd
    """
    if head_dim % 2:
        raise OddHeadDim(f"RoPE needs an even head dimension, got {head_dim}")
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]
    return np.cos(angles), np.sin(angles)


def rotate(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """@brief Rotate the pairs of @p x (..., T, d_head) by the angles tabulated in @p cos / @p sin."""
    x1 = x[..., 0::2]
    x2 = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x1 * cos - x2 * sin
    out[..., 1::2] = x1 * sin + x2 * cos
    return out


def rope_apply(x: np.ndarray, positions, base: float = ROPE_BASE) -> np.ndarray:
    """
    @brief Apply RoPE to per-position head vectors.
    @param x array (..., T, d_head)
    @param positions T integer positions
    @throws OddHeadDim if d_head is odd
    """
    cos, sin = rope_tables(positions, x.shape[-1], base)
    return rotate(x, cos, sin)


def rope_backward(dy: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    return rotate(dy, cos, -sin)
