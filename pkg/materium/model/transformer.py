"""
@file transformer.py
@brief Conditional decoder-only transformer with exact analytic gradients.

@details
    x   = dropout([condition prefix ; tok_emb[ids]])
    x   = x + dropout(attn(rmsnorm(x)))         (per block, pre-norm)
    x   = x + dropout(swiglu(rmsnorm(x)))
    out = rmsnorm(x) · lm_head                  (untied head, no biases)

RoPE positions run over the whole sequence: the prefix occupies positions 0..P−1 and material tokens
continue at P. Batches are right-padded; since attention is causal, padding never influences real
positions.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.elements import ElementTables, default_tables
from ..core.errors import CheckpointMismatch, ConfigError, SequenceTooLong
from ..data.transforms import CONDITION_NAMES
from ..tokenizer.vocab import EOS
from .attention import LayerKV, MultiHeadAttention, causal_mask
from .baselayer import (BaseLayer, ForwardContext, Params, Shapes, dropout_backward,
                        dropout_forward, truncated_normal)
from .conditions import ConditionEmbedding, ConditionSet
from .rmsnorm import NORM_EPS, RMSNorm
from .rope import ROPE_BASE, rope_tables
from .swiglu import SwiGLU

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """
    @class ModelConfig
    @brief Architecture hyper-parameters. Defaults are the full-size configuration.
    """

    vocab_size: int
    n_layers: int = 12
    n_heads: int = 16
    d_emb: int = 512
    d_ffn_hidden: int = 1536
    dropout_rate: float = 0.10
    max_seq_len: int = 128
    condition_schema: Tuple[str, ...] = CONDITION_NAMES
    use_formula: bool = True
    rope_base: float = ROPE_BASE
    max_stoich: int = 20
    n_elements: int = 103
    init_std: float = 0.02
    norm_eps: float = NORM_EPS

    def __post_init__(self) -> None:
        self.condition_schema = tuple(self.condition_schema)

    @property
    def d_head(self) -> int:
        return self.d_emb // self.n_heads

    def validate(self) -> "ModelConfig":
        """@throws ConfigError on any violated invariant."""
        for name in ("vocab_size", "n_layers", "n_heads", "d_emb", "d_ffn_hidden", "max_seq_len",
                     "max_stoich", "n_elements"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_emb % self.n_heads:
            raise ConfigError(f"d_emb ({self.d_emb}) must be divisible by n_heads ({self.n_heads})")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.init_std <= 0:
            raise ConfigError(f"init_std must be > 0, got {self.init_std}")
        for name in self.condition_schema:
            if name not in CONDITION_NAMES:
                raise ConfigError(f"unknown condition {name!r} in condition_schema")
        if len(set(self.condition_schema)) != len(self.condition_schema):
            raise ConfigError("condition_schema has duplicates")
        return self

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["condition_schema"] = list(self.condition_schema)
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def full(cls, vocab_size: int, **overrides) -> "ModelConfig":
        """@brief Full-size model: 12 layers, d_emb 512, 16 heads, FFN 1536."""
        return cls(vocab_size=vocab_size, **overrides)

    @classmethod
    def tiny(cls, vocab_size: int, **overrides) -> "ModelConfig":
        """@brief Desk-scale model: 4 layers, d_emb 128, 4 heads, FFN 384."""
        base = dict(n_layers=4, n_heads=4, d_emb=128, d_ffn_hidden=384)
        base.update(overrides)
        return cls(vocab_size=vocab_size, **base)


class DecoderBlock(BaseLayer):
    """@class DecoderBlock @brief Pre-norm attention and SwiGLU sub-blocks with residuals."""

    def __init__(self, index: int, config: ModelConfig) -> None:
        super().__init__(f"layers.{index}")
        self.attn_norm = RMSNorm(self.key("attn_norm"), config.d_emb, config.norm_eps)
        self.attn = MultiHeadAttention(self.prefix, config.d_emb, config.n_heads)
        self.ffn_norm = RMSNorm(self.key("ffn_norm"), config.d_emb, config.norm_eps)
        self.ffn = SwiGLU(self.prefix, config.d_emb, config.d_ffn_hidden)
        self.parts = (self.attn_norm, self.attn, self.ffn_norm, self.ffn)

    def param_shapes(self) -> Shapes:
        shapes: Shapes = {}
        for part in self.parts:
            shapes.update(part.param_shapes())
        return shapes

    def init_params(self, rng, std) -> Params:
        params: Params = {}
        for part in self.parts:
            params.update(part.init_params(rng, std))
        return params

    def forward(self, params, x, ctx):
        h1, c1 = self.attn_norm.forward(params, x, ctx)
        a, c2 = self.attn.forward(params, h1, ctx)
        a, m1 = dropout_forward(a, ctx)
        x = x + a
        h2, c3 = self.ffn_norm.forward(params, x, ctx)
        f, c4 = self.ffn.forward(params, h2, ctx)
        f, m2 = dropout_forward(f, ctx)
        return x + f, (c1, c2, m1, c3, c4, m2)

    def backward(self, params, dy, cache, grads):
        c1, c2, m1, c3, c4, m2 = cache
        df = dropout_backward(dy, m2)
        dx = dy + self.ffn_norm.backward(params, self.ffn.backward(params, df, c4, grads), c3, grads)
        da = dropout_backward(dx, m1)
        return dx + self.attn_norm.backward(params, self.attn.backward(params, da, c2, grads), c1, grads)

    def forward_cached(self, params, x, kv: LayerKV, cos, sin):
        h1, _ = self.attn_norm.forward(params, x, None)
        x = x + self.attn.forward_cached(params, h1, kv, cos, sin)
        h2, _ = self.ffn_norm.forward(params, x, None)
        f, _ = self.ffn.forward(params, h2, None)
        return x + f


@dataclass
class ForwardCache:
    ctx: ForwardContext
    prefix_lens: List[int]
    lengths: List[int]
    ids: np.ndarray
    slots: List[Any]
    emb_mask: Optional[np.ndarray]
    block_caches: List[Any] = field(default_factory=list)
    norm_cache: Any = None
    hidden: Optional[np.ndarray] = None


class DecoderTransformer:
    """
    @class DecoderTransformer
    @brief Stateless model definition; parameters are passed in as a flat dict.
    """

    def __init__(self, config: ModelConfig, tables: Optional[ElementTables] = None) -> None:
        self.config = config.validate()
        self.tables = tables or default_tables()
        self.conditions = ConditionEmbedding(config.condition_schema, config.d_emb, config.use_formula,
                                             config.n_elements, config.max_stoich, self.tables)
        self.blocks = [DecoderBlock(i, config) for i in range(config.n_layers)]
        self.final_norm = RMSNorm("final_norm", config.d_emb, config.norm_eps)

    # ---------- parameters ----------

    def param_shapes(self) -> Shapes:
        c = self.config
        shapes: Shapes = {"tok_emb": (c.vocab_size, c.d_emb)}
        shapes.update(self.conditions.param_shapes())
        for block in self.blocks:
            shapes.update(block.param_shapes())
        shapes.update(self.final_norm.param_shapes())
        shapes["lm_head"] = (c.d_emb, c.vocab_size)
        return shapes

    def init_params(self, seed: int = 0) -> Params:
        """@brief Truncated-normal weights (std init_std), unit norm gains, zero condition biases."""
        rng = np.random.default_rng(seed)
        std = self.config.init_std
        params: Params = {"tok_emb": truncated_normal(rng, (self.config.vocab_size, self.config.d_emb), std)}
        params.update(self.conditions.init_params(rng, std))
        for block in self.blocks:
            params.update(block.init_params(rng, std))
        params.update(self.final_norm.init_params(rng, std))
        params["lm_head"] = truncated_normal(rng, (self.config.d_emb, self.config.vocab_size), std)
        return params

    def check_params(self, params: Params) -> None:
        """@throws CheckpointMismatch if names or shapes disagree with the config."""
        shapes = self.param_shapes()
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        if missing or extra:
            raise CheckpointMismatch(f"parameter names differ from config: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, shape in shapes.items():
            if tuple(params[name].shape) != tuple(shape):
                raise CheckpointMismatch(f"{name}: shape {params[name].shape} does not match config {shape}")

    def prefix_length(self, cs: ConditionSet) -> int:
        return self.conditions.prefix_length(cs)

    # ---------- forward / backward ----------

    def _context(self, T: int, train: bool, rng) -> ForwardContext:
        cos, sin = rope_tables(np.arange(T), self.config.d_head, self.config.rope_base)
        return ForwardContext(train=train, rng=rng, dropout_rate=self.config.dropout_rate,
                              cos=cos, sin=sin, mask=causal_mask(T))

    def forward(self, params: Params, tokens: Sequence[Sequence[int]], conds: Sequence[ConditionSet],
                train: bool = False, rng: Optional[np.random.Generator] = None):
        """
        @brief Batched forward pass over right-padded [prefix ; tokens] rows.
        @return (logits (B, T, V), ForwardCache); T = max over the batch of P_b + L_b
        @throws SequenceTooLong if a row exceeds max_seq_len
        """
        if train and self.config.dropout_rate > 0 and rng is None:
            raise ValueError("training mode with dropout needs an rng")
        prefixes, slots = [], []
        for cs in conds:
            rows, s = self.conditions.embed(params, cs)
            prefixes.append(rows)
            slots.append(s)
        prefix_lens = [p.shape[0] for p in prefixes]
        lengths = [len(t) for t in tokens]
        totals = [p + n for p, n in zip(prefix_lens, lengths)]
        T = max(totals)
        if T > self.config.max_seq_len:
            raise SequenceTooLong(f"sequence of length {T} exceeds max_seq_len {self.config.max_seq_len}")

        B, D = len(tokens), self.config.d_emb
        ids = np.full((B, T), EOS, dtype=np.int64)
        x = np.empty((B, T, D))
        for b, (pre, seq) in enumerate(zip(prefixes, tokens)):
            P = pre.shape[0]
            ids[b, P:P + len(seq)] = seq
            ids[b, :P] = -1
            x[b, :P] = pre
            x[b, P:] = params["tok_emb"][ids[b, P:]]

        ctx = self._context(T, train, rng)
        x, emb_mask = dropout_forward(x, ctx)
        cache = ForwardCache(ctx, prefix_lens, lengths, ids, slots, emb_mask)
        for block in self.blocks:
            x, c = block.forward(params, x, ctx)
            cache.block_caches.append(c)
        h, cache.norm_cache = self.final_norm.forward(params, x, ctx)
        cache.hidden = h
        return h @ params["lm_head"], cache

    def backward(self, params: Params, dlogits: np.ndarray, cache: ForwardCache) -> Params:
        """@return gradients for every parameter (zeros for parameters off the computation path)."""
        grads: Params = {}
        D, V = self.config.d_emb, self.config.vocab_size
        grads["lm_head"] = cache.hidden.reshape(-1, D).T @ dlogits.reshape(-1, V)
        dx = self.final_norm.backward(params, dlogits @ params["lm_head"].T, cache.norm_cache, grads)
        for block, c in zip(reversed(self.blocks), reversed(cache.block_caches)):
            dx = block.backward(params, dx, c, grads)
        dx = dropout_backward(dx, cache.emb_mask)

        g_tok = np.zeros_like(params["tok_emb"])
        for b, P in enumerate(cache.prefix_lens):
            self.conditions.backward_slots(dx[b, :P], cache.slots[b], grads)
            np.add.at(g_tok, cache.ids[b, P:], dx[b, P:])
        grads["tok_emb"] = g_tok
        for name, shape in self.param_shapes().items():
            if name not in grads:
                grads[name] = np.zeros(shape)
        return grads

    def forward_logits(self, tokens: Sequence[int], cs: ConditionSet, params: Params, mode: str = "eval",
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """
        @brief Logits for every position of one sequence, prefix positions included.
        @param mode "train" (dropout from @p rng) or "eval" (deterministic)
        @return array (P + L, vocab_size)
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        logits, _ = self.forward(params, [list(tokens)], [cs], train=mode == "train", rng=rng)
        return logits[0]

    # ---------- incremental decoding ----------

    def start_kv(self) -> List[LayerKV]:
        return [LayerKV() for _ in self.blocks]

    def forward_incremental(self, params: Params, x: np.ndarray, kv: List[LayerKV]) -> np.ndarray:
        """
        @brief Eval-mode forward of new input embeddings (t, D) continuing the cached positions.
        @return logits (t, V)
        """
        start = kv[0].length
        t = x.shape[0]
        if start + t > self.config.max_seq_len:
            raise SequenceTooLong(f"sequence of length {start + t} exceeds max_seq_len {self.config.max_seq_len}")
        cos, sin = rope_tables(np.arange(start, start + t), self.config.d_head, self.config.rope_base)
        h = x[None]
        for block, layer_kv in zip(self.blocks, kv):
            h = block.forward_cached(params, h, layer_kv, cos, sin)
        h, _ = self.final_norm.forward(params, h, None)
        return (h @ params["lm_head"])[0]


def param_shapes(config: ModelConfig) -> Shapes:
    c = config.validate()
    d, f, v = c.d_emb, c.d_ffn_hidden, c.vocab_size
    shapes: Shapes = {"tok_emb": (v, d)}
    for name in c.condition_schema:
        for part in ("value_w", "value_b", "label", "nan"):
            shapes[f"cond.{name}.{part}"] = (d,)
    if c.use_formula:
        shapes["formula.element"] = (c.n_elements, d)
        shapes["formula.stoich"] = (c.max_stoich, d)
        shapes["formula.nan"] = (d,)
    for i in range(c.n_layers):
        p = f"layers.{i}"
        shapes[f"{p}.attn_norm"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.{w}"] = (d, d)
        shapes[f"{p}.ffn_norm"] = (d,)
        shapes[f"{p}.w_gate"] = (d, f)
        shapes[f"{p}.w_up"] = (d, f)
        shapes[f"{p}.w_down"] = (f, d)
    shapes["final_norm"] = (d,)
    shapes["lm_head"] = (d, v)
    return shapes


def count_params(config: ModelConfig) -> int:
    """@brief Exact number of learnable scalars for @p config."""
    return int(sum(int(np.prod(s)) for s in param_shapes(config).values()))
