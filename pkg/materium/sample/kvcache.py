"""
@file kvcache.py
@brief Per-sequence key/value cache for incremental decoding.

@details
Each generation worker owns one session: the condition prefix and every emitted token are run through
the stack once, and each new token only attends to the cached rotated keys and values. Logits agree
with a full recomputation to floating-point accumulation order (`numpy.allclose`, not bit-for-bit,
since BLAS may sum a long matrix product in a different order than a single row).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..model.attention import LayerKV
from ..model.baselayer import Params
from ..model.conditions import ConditionSet
from ..model.transformer import DecoderTransformer


@dataclass
class KVCache:
    layers: List[LayerKV] = field(default_factory=list)

    @classmethod
    def empty(cls, n_layers: int) -> "KVCache":
        return cls([LayerKV() for _ in range(n_layers)])

    @property
    def length(self) -> int:
        return self.layers[0].length if self.layers else 0


class InferenceSession:
    """
    @class InferenceSession
    @brief Eval-mode incremental forward for one condition set.
    """

    def __init__(self, model: DecoderTransformer, params: Params, cs: ConditionSet) -> None:
        self.model = model
        self.params = params
        self.conditions = cs
        self.cache = KVCache.empty(len(model.blocks))
        self.prefix, _ = model.conditions.embed(params, cs)
        self.tokens: List[int] = []

    @property
    def length(self) -> int:
        return self.cache.length

    def feed(self, tokens: Sequence[int]) -> np.ndarray:
        """
        @brief Append @p tokens (the prefix goes in with the first call).
        @return logits (V,) at the last fed position
        @throws SequenceTooLong when the cached length would exceed max_seq_len
        """
        x = self.params["tok_emb"][np.asarray(tokens, dtype=np.int64)]
        if self.cache.length == 0:
            x = np.concatenate([self.prefix, x], axis=0)
        logits = self.model.forward_incremental(self.params, x, self.cache.layers)
        self.tokens.extend(int(t) for t in tokens)
        return logits[-1]

    def step(self, token: int) -> np.ndarray:
        return self.feed([token])
