import logging
import math
from typing import List, Sequence

import numpy as np


class Adam:
    """Adam updating a fixed list of parameter arrays in place"""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        /,
        *,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params: List[np.ndarray] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class PlateauSchedule:
    """Halves the learning rate once the monitored loss has not improved for
    `patience` consecutive epochs, never going below `lr_min`. Epochs up to
    `patience` never reduce.
    """

    def __init__(self, /, *, lr: float, lr_min: float, patience: int) -> None:
        self.lr = lr
        self.lr_min = lr_min
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def update(self, epoch: int, loss: float) -> float:
        """Records the loss of the epoch and returns the learning rate for
        the next one
        """
        if loss < self.best:
            self.best = loss
            self.stale = 0
            return self.lr
        self.stale += 1
        if epoch > self.patience and self.stale >= self.patience and self.lr > self.lr_min:
            new_lr = max(self.lr / 2.0, self.lr_min)
            logging.info(f"epoch {epoch}: no improvement for {self.stale} epochs, learning rate {self.lr:.3g} -> {new_lr:.3g}")
            self.lr = new_lr
            self.stale = 0
        return self.lr
