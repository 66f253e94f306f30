"""
@file schedule.py
@brief Reduce-on-plateau learning rate rule, evaluated once per epoch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

logger = logging.getLogger(__name__)


@dataclass
class PlateauScheduler:
    """
    @class PlateauScheduler
    @brief Multiply lr by @p factor after @p patience epochs without improvement.

    @details
    An epoch improves when val_loss < best − threshold; that resets the counter and records the new
    best. Otherwise the counter grows, and when it reaches @p patience the lr is reduced and the
    counter restarts from zero.
    """

    lr: float
    factor: float = 0.5
    patience: int = 3
    threshold: float = 1e-6
    best: float = math.inf
    counter: int = 0
    n_reductions: int = 0

    def step(self, val_loss: float) -> float:
        """@return the lr to use for the next epoch."""
        if val_loss < self.best - self.threshold:
            self.best = float(val_loss)
            self.counter = 0
        else:
            self.counter += 1
            if self.counter >= self.patience:
                self.lr *= self.factor
                self.counter = 0
                self.n_reductions += 1
                logger.info("validation loss plateaued; lr reduced to %.3g", self.lr)
        return self.lr

    def state_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["best"] = None if math.isinf(self.best) else self.best
        return out

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        for key, value in state.items():
            if key == "best" and value is None:
                value = math.inf
            setattr(self, key, value)
