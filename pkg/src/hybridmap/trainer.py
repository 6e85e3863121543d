"""Training loops with convergence-window early stopping.

A session runs epochs until the epoch-mean training loss has not improved
for ``window`` consecutive epochs (or a hard epoch cap is hit) and leaves
the network holding the best-loss parameters.  The cosine learning-rate
schedule restarts at every session.  Analog-mapped layers train through the
noisy hardware-aware forward; their parameters use the analog optimiser
hyper-parameters, everything else uses the digital ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogConfig
from .model import Network
from .network import MappingVector
from .optim import SGD, OptimizerConfig
from .rng import stream
from .tensor import DivergenceError, softmax_cross_entropy


@dataclass(frozen=True)
class TrainingConfig:
    """Defaults are tuned for the synthetic 16x16 task; real datasets need
    their own hyper-parameter search (learning rates here are config inputs,
    not part of the method)."""

    digital: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(learning_rate=0.02, momentum=0.9)
    )
    analog: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(learning_rate=0.01, momentum=0.9)
    )
    pretrain_max_epochs: int = 60
    pretrain_window: int = 5

    def __post_init__(self):
        if self.digital.batch_size != self.analog.batch_size:
            raise ValueError("digital and analog optimisers must share a batch size")

    @property
    def batch_size(self) -> int:
        return self.digital.batch_size


@dataclass
class SessionResult:
    epochs: int
    best_loss: float
    loss_history: list[float]
    diverged: bool = False


class ConvergenceWindow:
    """Stop once the loss has not improved for ``window`` consecutive epochs."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.best = np.inf
        self.stall = 0

    def update(self, loss: float) -> bool:
        """Record one epoch loss; returns True when training should stop."""
        if loss < self.best:
            self.best = loss
            self.stall = 0
            return False
        self.stall += 1
        return self.stall >= self.window


def train_session(
    model: Network,
    train_x: np.ndarray,
    train_y: np.ndarray,
    *,
    mapping: MappingVector | None,
    analog_cfg: AnalogConfig | None,
    cfg: TrainingConfig,
    window: int,
    max_epochs: int,
    seed: int,
    tag: str,
    t_eval: float = 0.0,
) -> SessionResult:
    """Train in place; on return the model holds the best-loss parameters.

    A non-finite loss marks the session as diverged: the best parameters seen
    so far are restored and ``diverged=True`` is reported so callers can roll
    back.
    """
    rng = stream(seed, "train", tag)
    digital_params, analog_params = model.param_groups(mapping)
    opts = []
    if digital_params:
        opts.append(SGD(digital_params, cfg.digital))
    if analog_params:
        opts.append(SGD(analog_params, cfg.analog))
    mode = "train" if mapping is not None and mapping.analog else "digital"
    n = train_x.shape[0]
    bs = cfg.batch_size
    best_snap = model.snapshot()
    stopper = ConvergenceWindow(window)
    history: list[float] = []
    diverged = False
    epoch = 0
    for epoch in range(max_epochs):
        order = rng.permutation(n)
        total = 0.0
        try:
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                logits = model.forward(
                    train_x[idx],
                    mapping=mapping,
                    mode=mode,
                    analog_cfg=analog_cfg,
                    rng=rng,
                    t=t_eval,
                )
                loss = softmax_cross_entropy(logits, train_y[idx])
                for o in opts:
                    o.zero_grad()
                loss.backward()
                for o in opts:
                    o.step(epoch)
                total += float(loss.data) * len(idx)
        except DivergenceError:
            diverged = True
            break
        epoch_loss = total / n
        history.append(epoch_loss)
        if not np.isfinite(epoch_loss):
            diverged = True
            break
        improved = epoch_loss < stopper.best
        stop = stopper.update(epoch_loss)
        if improved:
            best_snap = model.snapshot()
        if stop:
            break
    model.restore(best_snap)
    return SessionResult(
        epochs=epoch + 1,
        best_loss=float(stopper.best),
        loss_history=history,
        diverged=diverged,
    )


def pretrain_float(model: Network, train_x, train_y, cfg: TrainingConfig, seed: int) -> SessionResult:
    """Floating-point pre-training of the digital baseline network."""
    return train_session(
        model,
        train_x,
        train_y,
        mapping=None,
        analog_cfg=None,
        cfg=cfg,
        window=cfg.pretrain_window,
        max_epochs=cfg.pretrain_max_epochs,
        seed=seed,
        tag="pretrain",
    )


def digital_accuracy(model: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    """Exact digital accuracy (deterministic, so no repetitions needed)."""
    correct = 0
    for start in range(0, x.shape[0], batch_size):
        logits = model.forward(x[start : start + batch_size], mode="digital")
        correct += int((logits.data.argmax(axis=1) == y[start : start + batch_size]).sum())
    return 100.0 * correct / x.shape[0]
