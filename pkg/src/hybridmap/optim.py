"""SGD with momentum and the cosine-annealed learning-rate schedule.

Two optimiser instances exist per run, one for digitally-mapped parameters
and one for analog-mapped ones, each with its own hyper-parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    schedule: str = "cosine"  # or "constant"
    t_max: int = 50
    eta_min: float = 0.0
    batch_size: int = 256

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.t_max < 1 or self.batch_size < 1:
            raise ValueError("t_max and batch_size must be >= 1")


def lr_at(cfg: OptimizerConfig, epoch: int) -> float:
    """Learning rate at a (zero-based) epoch within the current session."""
    if cfg.schedule == "constant":
        return cfg.learning_rate
    frac = min(epoch, cfg.t_max) / cfg.t_max
    return cfg.eta_min + 0.5 * (cfg.learning_rate - cfg.eta_min) * (1.0 + math.cos(math.pi * frac))


class SGD:
    """v <- mu*v + g + lambda*w ; w <- w - eta(epoch)*v"""

    def __init__(self, params: list[Tensor], cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self, epoch: int):
        eta = lr_at(self.cfg, epoch)
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                raise ValueError("parameter has no gradient; run backward first")
            if p.grad.shape != p.data.shape:
                raise ValueError("gradient/parameter shape mismatch")
            v *= self.cfg.momentum
            v += p.grad
            if self.cfg.weight_decay:
                v += self.cfg.weight_decay * p.data
            p.data -= eta * v

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def sgd_step(params: list[Tensor], grads: list[np.ndarray], cfg: OptimizerConfig, epoch: int, velocity=None):
    """One-shot functional update used by tests; returns the velocity state."""
    if velocity is None:
        velocity = [np.zeros_like(p.data) for p in params]
    eta = lr_at(cfg, epoch)
    for p, g, v in zip(params, grads, velocity):
        if g.shape != p.data.shape:
            raise ValueError("gradient/parameter shape mismatch")
        v *= cfg.momentum
        v += g
        if cfg.weight_decay:
            v += cfg.weight_decay * p.data
        p.data -= eta * v
    return velocity
