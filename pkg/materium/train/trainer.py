"""
@file trainer.py
@brief Optimization loop: masked next-token loss, AdamW, plateau schedule, conditional dropout.

@details
One epoch = a seeded shuffle of the training examples, one AdamW step per batch, then a validation
pass (eval mode, no condition dropout) that drives the plateau schedule. After every epoch a metrics
row is appended to `metrics.csv` and a full checkpoint (parameters, moments, schedule and RNG state)
is written to `checkpoint_epoch<n>.npz`. `checkpoint.npz` always holds the latest epoch, so `resume`
continues from the last completed one.

A single generator owned by the train state drives shuffling, condition dropout and layer dropout;
with the same seed, data and config two runs produce bit-identical loss trajectories.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..core.errors import CheckpointMismatch, ConfigError, NonFiniteLoss
from ..core.logger import Logger, log_rss
from ..model.baselayer import Params
from ..model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..model.conditions import ConditionSet
from ..model.transformer import DecoderTransformer
from ..tokenizer.quantize import LatticeRanges
from .adamw import AdamW, clip_grad_norm
from .conditioning import apply_conditional_dropout
from .loss import IGNORE_INDEX, build_targets, cross_entropy, token_accuracy
from .schedule import PlateauScheduler

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """
    @class TrainConfig
    @brief Optimization hyper-parameters (desk-scale batch size by default).
    """

    batch_size: int = 32
    lr_init: float = 4e-4
    lr_factor: float = 0.5
    plateau_patience: int = 3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 50
    cond_dropout_p: float = 0.5
    seed: int = 0
    grad_clip_norm: Optional[float] = 1.0
    train_frac: float = 0.9
    progress: bool = True

    def __post_init__(self) -> None:
        self.betas = tuple(self.betas)

    def validate(self) -> "TrainConfig":
        """@throws ConfigError before any compute."""
        if not self.lr_init > 0:
            raise ConfigError(f"lr_init must be > 0, got {self.lr_init}")
        if not 0 < self.lr_factor < 1:
            raise ConfigError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.cond_dropout_p <= 1.0:
            raise ConfigError(f"cond_dropout_p must be in [0, 1], got {self.cond_dropout_p}")
        if not all(0.0 <= b < 1.0 for b in self.betas) or len(self.betas) != 2:
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("eps must be > 0 and weight_decay >= 0")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ConfigError(f"grad_clip_norm must be > 0 or null, got {self.grad_clip_norm}")
        if not 0 < self.train_frac < 1:
            raise ConfigError(f"train_frac must be in (0, 1), got {self.train_frac}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["betas"] = list(self.betas)
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class TrainingExample:
    id: str
    tokens: Tuple[int, ...]
    conditions: ConditionSet = field(default_factory=ConditionSet)


@dataclass
class TrainState:
    """
    @class TrainState
    @brief Mutable optimization state; @p epoch counts completed epochs.
    """

    params: Params
    m: Params
    v: Params
    scheduler: PlateauScheduler
    rng: np.random.Generator
    t: int = 0
    epoch: int = 0
    step: int = 0

    @property
    def lr(self) -> float:
        return self.scheduler.lr

    @property
    def best(self) -> float:
        return self.scheduler.best

    def scalars(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "epoch": self.epoch,
            "step": self.step,
            "scheduler": self.scheduler.state_dict(),
            "rng": self.rng.bit_generator.state,
        }


class Trainer:
    """
    @class Trainer
    @brief Runs epochs over tokenized examples and writes metrics and checkpoints through a Logger.

    @param model the model definition (holds no weights)
    @param config validated TrainConfig
    @param runLogger optional run-directory logger; without it nothing is written to disk
    @param vocab_hash, ordering, coords_first, ranges metadata stored with each checkpoint
    """

    def __init__(self, model: DecoderTransformer, config: TrainConfig, runLogger: Optional[Logger] = None,
                 vocab_hash: str = "", ordering: str = "HighFirst", coords_first: bool = False,
                 ranges: LatticeRanges = LatticeRanges()) -> None:
        self.model = model
        self.config = config.validate()
        self.runLogger = runLogger
        self.optimizer = AdamW(config.betas, config.eps, config.weight_decay)
        self.vocab_hash = vocab_hash
        self.ordering = ordering
        self.coords_first = coords_first
        self.ranges = ranges

    # ---------- state ----------

    def init_state(self, params: Optional[Params] = None) -> TrainState:
        params = params if params is not None else self.model.init_params(self.config.seed)
        m, v = self.optimizer.init_state(params)
        scheduler = PlateauScheduler(self.config.lr_init, self.config.lr_factor, self.config.plateau_patience)
        return TrainState(params, m, v, scheduler, np.random.default_rng(self.config.seed))

    # ---------- batches ----------

    def _batches(self, examples: Sequence[TrainingExample], rng: Optional[np.random.Generator]) -> Iterator[List[TrainingExample]]:
        order = rng.permutation(len(examples)) if rng is not None else np.arange(len(examples))
        bs = self.config.batch_size
        for start in range(0, len(order), bs):
            yield [examples[i] for i in order[start:start + bs]]

    def _loss_and_logits(self, params: Params, batch: Sequence[TrainingExample], train: bool,
                         rng: Optional[np.random.Generator]):
        tokens = [list(ex.tokens) for ex in batch]
        conds = [ex.conditions for ex in batch]
        if train and self.config.cond_dropout_p > 0:
            conds = [apply_conditional_dropout(cs, self.config.cond_dropout_p, rng) for cs in conds]
        logits, cache = self.model.forward(params, tokens, conds, train=train, rng=rng)
        targets = build_targets(cache.prefix_lens, tokens, logits.shape[1])
        loss, dlogits = cross_entropy(logits, targets)
        return loss, dlogits, logits, targets, cache

    # ---------- steps ----------

    def train_step(self, state: TrainState, batch: Sequence[TrainingExample], batch_index: int = 0) -> Dict[str, float]:
        """
        @brief One forward/backward pass and AdamW update with gradient clipping.
        @return {"loss", "grad_norm"}
        @throws NonFiniteLoss (parameters untouched) if the loss or the gradient norm is not finite
        """
        loss, dlogits, _, _, cache = self._loss_and_logits(state.params, batch, True, state.rng)
        if not math.isfinite(loss):
            raise NonFiniteLoss(batch_index, loss)
        grads = self.model.backward(state.params, dlogits, cache)
        grad_norm = clip_grad_norm(grads, self.config.grad_clip_norm)
        if not math.isfinite(grad_norm):
            raise NonFiniteLoss(batch_index, loss)
        state.t += 1
        state.step += 1
        self.optimizer.step(state.params, grads, state.m, state.v, state.t, state.lr)
        return {"loss": loss, "grad_norm": grad_norm}

    def evaluate(self, params: Params, examples: Sequence[TrainingExample]) -> Dict[str, float]:
        """
        @brief Token-weighted mean loss and argmax accuracy in eval mode, conditions untouched.
        @return {"loss", "accuracy", "n_tokens"}
        """
        total, correct, count = 0.0, 0.0, 0
        for batch in self._batches(examples, None):
            loss, _, logits, targets, _ = self._loss_and_logits(params, batch, False, None)
            n = int(np.sum(targets != IGNORE_INDEX))
            total += loss * n
            correct += token_accuracy(logits, targets) * n
            count += n
        if count == 0:
            return {"loss": math.nan, "accuracy": math.nan, "n_tokens": 0}
        return {"loss": total / count, "accuracy": correct / count, "n_tokens": count}

    # ---------- epochs ----------

    def fit(self, train: Sequence[TrainingExample], val: Sequence[TrainingExample] = (),
            state: Optional[TrainState] = None) -> TrainState:
        """
        @brief Train until `config.epochs` epochs are complete.
        @param state continue from this state (e.g. from @ref resume); a fresh one otherwise
        """
        state = state or self.init_state()
        cfg = self.config
        if self.runLogger is not None and state.epoch == 0:
            self.runLogger.truncate_metrics(0)
        log_rss("train start")
        for epoch in range(state.epoch + 1, cfg.epochs + 1):
            t0 = time.perf_counter()
            n_batches = math.ceil(len(train) / cfg.batch_size)
            losses, norms = [], []
            batches = tqdm(self._batches(train, state.rng), total=n_batches, desc=f"epoch {epoch}",
                           disable=None if cfg.progress else True, leave=False)
            for i, batch in enumerate(batches):
                metrics = self.train_step(state, batch, batch_index=i)
                losses.append(metrics["loss"])
                norms.append(metrics["grad_norm"])
                batches.set_postfix(loss=f"{metrics['loss']:.4f}")

            train_loss = float(np.mean(losses)) if losses else math.nan
            val_loss = self.evaluate(state.params, val)["loss"] if val else train_loss
            lr_used = state.lr
            state.scheduler.step(val_loss)
            state.epoch = epoch
            logger.info("epoch %d/%d: train_loss=%.4f val_loss=%.4f lr=%.3g (%.1fs)",
                        epoch, cfg.epochs, train_loss, val_loss, lr_used, time.perf_counter() - t0)
            if self.runLogger is not None:
                self.runLogger.log_metrics({
                    "epoch": epoch,
                    "step": state.step,
                    "train_loss": train_loss,
                    "val_loss": val_loss,
                    "lr": lr_used,
                    "grad_norm": float(np.mean(norms)) if norms else math.nan,
                })
                self.save(state, self.runLogger.path(f"checkpoint_epoch{epoch}.npz"))
                self.save(state, self.runLogger.path("checkpoint.npz"))
            log_rss(f"epoch {epoch}")
        return state

    # ---------- persistence ----------

    def checkpoint(self, state: TrainState) -> Checkpoint:
        return Checkpoint(self.model.config, state.params, self.vocab_hash, str(self.ordering), self.coords_first,
                          self.ranges, state.scalars(), state.m, state.v)

    def save(self, state: TrainState, path) -> Path:
        return save_checkpoint(path, self.checkpoint(state))

    def resume(self, path, vocab=None) -> TrainState:
        """
        @brief Restore a TrainState from a checkpoint written by @ref fit.
        @throws CheckpointMismatch if the checkpoint lacks trainer state or does not fit the model
        """
        ckpt = load_checkpoint(path, vocab)
        if ckpt.train_state is None or ckpt.opt_m is None:
            raise CheckpointMismatch(f"{path}: checkpoint carries no trainer state")
        if ckpt.config.to_dict() != self.model.config.to_dict():
            raise CheckpointMismatch(f"{path}: model config differs from the one being trained")
        ts = ckpt.train_state
        scheduler = PlateauScheduler(self.config.lr_init, self.config.lr_factor, self.config.plateau_patience)
        scheduler.load_state_dict(ts["scheduler"])
        rng = np.random.default_rng()
        rng.bit_generator.state = ts["rng"]
        state = TrainState(ckpt.params, ckpt.opt_m, ckpt.opt_v, scheduler, rng,
                           t=int(ts["t"]), epoch=int(ts["epoch"]), step=int(ts["step"]))
        if self.runLogger is not None:
            self.runLogger.truncate_metrics(state.epoch)
        logger.info("resumed from %s at epoch %d (lr=%.3g)", path, state.epoch, state.lr)
        return state
