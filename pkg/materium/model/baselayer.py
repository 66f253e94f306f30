"""
@file baselayer.py
@brief Base class for model layers with a hand-written backward pass.

@details
Layers do not own their weights. Parameters live in one flat dict of named float64 arrays shared by
the whole model (the same dict the optimizer updates and the checkpoint stores); a layer only knows the
names and shapes of its entries. `forward` returns the output and a cache, `backward` consumes the
cache, accumulates parameter gradients into a dict and returns the input gradient. Because forward is
pure in the parameters, one params dict can be shared by concurrent generation workers.
"""

from __future__ import annotations

from abc import ABC
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

Params = Dict[str, np.ndarray]
Shapes = Dict[str, Tuple[int, ...]]


@dataclass
class ForwardContext:
    """
    @class ForwardContext
    @brief Per-call state: mode, dropout RNG and the RoPE/mask tables of the current sequence length.
    """

    train: bool = False
    rng: Optional[np.random.Generator] = None
    dropout_rate: float = 0.0
    cos: Optional[np.ndarray] = None
    sin: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None

    @property
    def dropout_active(self) -> bool:
        return self.train and self.dropout_rate > 0.0


class BaseLayer(ABC):
    """
    @class BaseLayer
    @brief Abstract layer: parameter shapes, initialization, forward and backward.

    @note Subclasses must implement @ref param_shapes, @ref forward and @ref backward.
    """

    def __init__(self, prefix: str = "") -> None:
        self.prefix = prefix

    def key(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def param_shapes(self) -> Shapes:
        raise NotImplementedError("Subclasses must implement param_shapes()")

    def init_params(self, rng: np.random.Generator, std: float) -> Params:
        """@brief Truncated normal (±2 std) for every tensor; subclasses override gains and biases."""
        return {k: truncated_normal(rng, shape, std) for k, shape in self.param_shapes().items()}

    def forward(self, params: Params, x: np.ndarray, ctx: ForwardContext) -> Tuple[np.ndarray, Any]:
        """
        @param params flat parameter dict
        @param x layer input
        @return (output, cache for @ref backward)
        @throws NotImplementedError If a subclass does not override this method.
        """
        raise NotImplementedError("Subclasses must implement forward()")

    def backward(self, params: Params, dy: np.ndarray, cache: Any, grads: Params) -> np.ndarray:
        """
        @param dy gradient of the loss w.r.t. the layer output
        @param grads dict receiving parameter gradients (accumulated with +=)
        @return gradient w.r.t. the layer input
        @throws NotImplementedError If a subclass does not override this method.
        """
        raise NotImplementedError("Subclasses must implement backward()")


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng).astype(np.float64)


def accumulate(grads: Params, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value.copy()


def dropout_forward(x: np.ndarray, ctx: ForwardContext) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """@brief Inverted dropout; identity (and no RNG use) outside training."""
    if not ctx.dropout_active:
        return x, None
    keep = 1.0 - ctx.dropout_rate
    mask = (ctx.rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return dy if mask is None else dy * mask
