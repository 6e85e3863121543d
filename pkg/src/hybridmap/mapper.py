"""Greedy accuracy-constrained layer mapping.

Layers are scanned once in MAC-descending order.  Each candidate is
tentatively switched to analog, the whole network is retrained with noise
injection until the training loss stops improving inside a convergence
window, and the candidate is kept only if the mean validation accuracy over
several noisy evaluation repetitions stays within the user's drop threshold
of the floating-point baseline.  Otherwise the parameters are rolled back to
the pre-candidate snapshot and the layer stays digital.  The scan performs
exactly one retraining session per mappable layer, so cost grows linearly
with depth rather than with the 2^L mapping count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analog import AnalogConfig
from .model import Network
from .network import ANALOG, DIGITAL, MappingVector, NetworkDescriptor, count_macs, mac_ratio
from .rng import stream
from .trainer import TrainingConfig, digital_accuracy, train_session

ACCEPTED = "accepted"
ROLLED_BACK = "rolled_back"


@dataclass(frozen=True)
class MapperConfig:
    drop_threshold: float = 5.0  # percentage points vs float baseline
    convergence_window: int = 5
    max_epochs_per_candidate: int = 60
    eval_reps_inner: int = 5
    eval_reps_final: int = 20
    t_eval: float = 86400.0
    seed: int = 0

    def __post_init__(self):
        if self.drop_threshold <= 0:
            raise ValueError("drop_threshold must be positive")
        if self.convergence_window < 1 or self.max_epochs_per_candidate < 1:
            raise ValueError("epoch budgets must be >= 1")
        if self.eval_reps_inner < 1 or self.eval_reps_final < 1:
            raise ValueError("evaluation repetitions must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    mean_accuracy: float
    std_accuracy: float
    per_rep: tuple[float, ...]
    mac_ratio: float
    t_eval: float


@dataclass(frozen=True)
class TraceEntry:
    layer_id: int
    macs: int
    decision: str
    mean_accuracy: float
    std_accuracy: float
    epochs: int


@dataclass
class GreedyResult:
    mapping: MappingVector
    trace: tuple[TraceEntry, ...]
    final_report: EvalReport
    float_accuracy: float
    sessions: int


def rank_layers(net: NetworkDescriptor) -> list[int]:
    """Mappable layer ids, largest MAC count first; ties keep topology order."""
    ids = list(net.mappable_ids)
    return sorted(ids, key=lambda lid: (-count_macs(net.layer(lid)), lid))


def evaluate_mapping(
    model: Network,
    mapping: MappingVector,
    analog_cfg: AnalogConfig,
    x: np.ndarray,
    y: np.ndarray,
    *,
    reps: int,
    t_eval: float,
    seed: int,
    tag: str,
    batch_size: int = 256,
) -> EvalReport:
    """Accuracy over ``reps`` fresh programmings of the analog layers.

    Each repetition reprograms every analog layer (new weight-noise and drift
    exponent draws), drifts it to ``t_eval`` and measures accuracy; digital
    layers are exact, so an all-digital mapping has zero spread.
    """
    accs = []
    n = x.shape[0]
    for rep in range(reps):
        prog_rng = stream(seed, "program", tag, rep)
        read_rng = stream(seed, "eval", tag, rep)
        states = model.program_layers(mapping, analog_cfg, prog_rng)
        correct = 0
        for start in range(0, n, batch_size):
            logits = model.forward(
                x[start : start + batch_size],
                mapping=mapping,
                mode="programmed",
                analog_cfg=analog_cfg,
                states=states,
                rng=read_rng,
                t=t_eval,
            )
            correct += int((logits.data.argmax(axis=1) == y[start : start + batch_size]).sum())
        accs.append(100.0 * correct / n)
    arr = np.asarray(accs)
    return EvalReport(
        mean_accuracy=float(arr.mean()),
        std_accuracy=float(arr.std()),
        per_rep=tuple(float(a) for a in arr),
        mac_ratio=mac_ratio(model.descriptor, mapping),
        t_eval=t_eval,
    )


def greedy_map(
    model: Network,
    data,
    mapper_cfg: MapperConfig,
    train_cfg: TrainingConfig,
    analog_cfg: AnalogConfig,
) -> GreedyResult:
    """Run the accuracy-constrained greedy scan on a pre-trained float model.

    ``model`` is mutated: on return it holds the retrained weights of the
    final accepted mapping.  The drop threshold is always measured against
    the original floating-point accuracy, never against the previous
    accepted mapping.
    """
    net = model.descriptor
    float_acc = digital_accuracy(model, data.val_x, data.val_y)
    mapping = MappingVector.all_digital(net)
    trace: list[TraceEntry] = []
    sessions = 0
    for lid in rank_layers(net):
        snapshot = model.snapshot()
        candidate = mapping.with_domain(lid, ANALOG)
        result = train_session(
            model,
            data.train_x,
            data.train_y,
            mapping=candidate,
            analog_cfg=analog_cfg,
            cfg=train_cfg,
            window=mapper_cfg.convergence_window,
            max_epochs=mapper_cfg.max_epochs_per_candidate,
            seed=mapper_cfg.seed,
            tag=f"candidate-{lid}",
            t_eval=mapper_cfg.t_eval,
        )
        sessions += 1
        if result.diverged:
            model.restore(snapshot)
            trace.append(
                TraceEntry(lid, count_macs(net.layer(lid)), ROLLED_BACK,
                           float("nan"), float("nan"), result.epochs)
            )
            continue
        report = evaluate_mapping(
            model, candidate, analog_cfg, data.val_x, data.val_y,
            reps=mapper_cfg.eval_reps_inner, t_eval=mapper_cfg.t_eval,
            seed=mapper_cfg.seed, tag=f"inner-{lid}",
            batch_size=train_cfg.batch_size,
        )
        drop = float_acc - report.mean_accuracy
        if drop <= mapper_cfg.drop_threshold:
            mapping = candidate
            decision = ACCEPTED
        else:
            model.restore(snapshot)
            decision = ROLLED_BACK
        trace.append(
            TraceEntry(lid, count_macs(net.layer(lid)), decision,
                       report.mean_accuracy, report.std_accuracy, result.epochs)
        )
    final = evaluate_mapping(
        model, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag="final",
        batch_size=train_cfg.batch_size,
    )
    return GreedyResult(
        mapping=mapping,
        trace=tuple(trace),
        final_report=final,
        float_accuracy=float_acc,
        sessions=sessions,
    )
