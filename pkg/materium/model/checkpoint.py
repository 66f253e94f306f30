"""
@file checkpoint.py
@brief Versioned single-file checkpoints (.npz) for model parameters and trainer state.

@details
Container layout:
- `param/<name>`  every model tensor
- `opt_m/<name>`, `opt_v/<name>`  AdamW moments (only when a trainer state is saved)
- `__meta__`  JSON string: format version, ModelConfig, vocabulary hash, ordering, coords_first,
  lattice ranges and the optional scalar trainer state (epoch, step, lr, scheduler, RNG)

Loading validates every tensor shape against the stored config and the vocabulary hash against the
vocabulary in use.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ..core.errors import CheckpointMismatch
from ..core.logger import atomic_write_bytes
from ..tokenizer.ordering import OrderingStrategy
from ..tokenizer.quantize import LatticeRanges
from ..tokenizer.vocab import Vocabulary
from .baselayer import Params
from .transformer import DecoderTransformer, ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
META_KEY = "__meta__"


@dataclass
class Checkpoint:
    """
    @class Checkpoint
    @brief Everything needed to rebuild a model and, optionally, continue training it.
    """

    config: ModelConfig
    params: Params
    vocab_hash: str
    ordering: str = "HighFirst"
    coords_first: bool = False
    ranges: LatticeRanges = field(default_factory=LatticeRanges)
    train_state: Optional[Dict[str, Any]] = None
    opt_m: Optional[Params] = None
    opt_v: Optional[Params] = None

    @property
    def strategy(self) -> OrderingStrategy:
        return OrderingStrategy.parse(self.ordering)

    def model(self, tables=None) -> DecoderTransformer:
        return DecoderTransformer(self.config, tables)


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    """@brief Serialize @p ckpt atomically to @p path."""
    arrays: Dict[str, np.ndarray] = {f"param/{k}": v for k, v in ckpt.params.items()}
    if ckpt.opt_m is not None:
        arrays.update({f"opt_m/{k}": v for k, v in ckpt.opt_m.items()})
        arrays.update({f"opt_v/{k}": v for k, v in ckpt.opt_v.items()})
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "vocab_hash": ckpt.vocab_hash,
        "ordering": str(ckpt.ordering),
        "coords_first": bool(ckpt.coords_first),
        "ranges": ckpt.ranges.to_dict(),
        "train_state": ckpt.train_state,
    }
    arrays[META_KEY] = np.array(json.dumps(meta))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path = Path(path)
    atomic_write_bytes(path, buf.getvalue())
    logger.debug("checkpoint written to %s (%d tensors)", path, len(ckpt.params))
    return path


def load_checkpoint(path: Union[str, Path], vocab: Optional[Vocabulary] = None) -> Checkpoint:
    """
    @brief Read and validate a checkpoint.
    @param vocab when given, its hash must equal the stored vocabulary hash
    @throws CheckpointMismatch on version, shape or vocabulary mismatch, or a malformed file
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            if META_KEY not in data.files:
                raise CheckpointMismatch(f"{path}: not a materium checkpoint (no metadata)")
            meta = json.loads(str(data[META_KEY]))
            params = {k[len("param/"):]: np.array(data[k], dtype=np.float64) for k in data.files if k.startswith("param/")}
            opt_m = {k[len("opt_m/"):]: np.array(data[k]) for k in data.files if k.startswith("opt_m/")}
            opt_v = {k[len("opt_v/"):]: np.array(data[k]) for k in data.files if k.startswith("opt_v/")}
    except (OSError, ValueError) as exc:
        raise CheckpointMismatch(f"{path}: cannot read checkpoint: {exc}") from None

    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"{path}: unsupported checkpoint version {meta.get('version')}")
    config = ModelConfig.from_dict(meta["config"])
    DecoderTransformer(config).check_params(params)
    if vocab is not None:
        if vocab.hash() != meta["vocab_hash"]:
            raise CheckpointMismatch(f"{path}: vocabulary hash differs from the vocabulary in use")
        if vocab.total_size != config.vocab_size:
            raise CheckpointMismatch(f"{path}: vocab size {vocab.total_size} != model vocab size {config.vocab_size}")
    return Checkpoint(
        config=config,
        params=params,
        vocab_hash=meta["vocab_hash"],
        ordering=meta.get("ordering", "HighFirst"),
        coords_first=bool(meta.get("coords_first", False)),
        ranges=LatticeRanges.from_dict(meta["ranges"]) if meta.get("ranges") else LatticeRanges(),
        train_state=meta.get("train_state"),
        opt_m=opt_m or None,
        opt_v=opt_v or None,
    )
