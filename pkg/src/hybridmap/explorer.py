"""Design-space exploration: sweeps, Pareto fronts, elbow, exhaustive ceiling.

A sweep runs the greedy mapper once per (threshold, seed) pair; the
approximate Pareto front is computed over the union of all resulting points.
The exhaustive ceiling retrains every one of the 2^L mappings of a small
network with the same convergence criteria and yields the exact front the
greedy results are compared against.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analog import AnalogConfig
from .mapper import MapperConfig, evaluate_mapping, greedy_map
from .model import Network
from .network import MappingVector, NetworkDescriptor, mac_ratio
from .trainer import TrainingConfig, train_session

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParetoPoint:
    mac_ratio: float
    mean_accuracy: float
    std_accuracy: float = 0.0
    source: str = ""
    mapping: tuple[str, ...] = ()

    def __post_init__(self):
        if not (np.isfinite(self.mac_ratio) and np.isfinite(self.mean_accuracy)):
            raise ValueError("pareto point coordinates must be finite")
        if self.std_accuracy < 0:
            raise ValueError("std must be >= 0")


def _dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    ge = a.mac_ratio >= b.mac_ratio and a.mean_accuracy >= b.mean_accuracy
    gt = a.mac_ratio > b.mac_ratio or a.mean_accuracy > b.mean_accuracy
    return ge and gt


def pareto_front(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset under (maximise mac_ratio, maximise accuracy).

    Exact duplicates of a non-dominated point are all kept.  Output is
    sorted by mac_ratio ascending.
    """
    if not points:
        raise ValueError("pareto_front needs at least one point")
    front = [
        p
        for p in points
        if not any(_dominates(q, p) for q in points)
    ]
    return sorted(front, key=lambda p: (p.mac_ratio, p.mean_accuracy))


def elbow(front: list[ParetoPoint]) -> ParetoPoint:
    """Knee of a front sorted by mac_ratio ascending.

    The elbow maximises the perpendicular distance to the chord joining the
    front's endpoints after min-max normalising both axes (so the choice is
    invariant to affine rescaling of either axis).  Degenerate cases: one or
    two points return the highest-ratio point; a collinear front returns its
    first (lowest-ratio) point.
    """
    if not front:
        raise ValueError("elbow needs at least one point")
    if len(front) < 3:
        return front[-1]
    x = np.array([p.mac_ratio for p in front])
    y = np.array([p.mean_accuracy for p in front])

    def norm(v):
        span = v.max() - v.min()
        return (v - v.min()) / span if span > 0 else np.zeros_like(v)

    xn, yn = norm(x), norm(y)
    x0, y0 = xn[0], yn[0]
    dx, dy = xn[-1] - x0, yn[-1] - y0
    length = np.hypot(dx, dy)
    if length == 0:
        return front[0]
    dist = np.abs(dy * (xn - x0) - dx * (yn - y0)) / length
    best = int(np.argmax(dist))  # argmax takes the first (lowest-ratio) tie
    if dist[best] <= 0:
        return front[0]
    return front[best]


# ---------------------------------------------------------------------------
# exhaustive ceiling


MAX_EXHAUSTIVE_MAPPINGS = 4096


def enumerate_mappings(net: NetworkDescriptor) -> list[MappingVector]:
    """All 2^L digital/analog assignments of the mappable layers."""
    ids = net.mappable_ids
    out = []
    for bits in itertools.product((False, True), repeat=len(ids)):
        analog = frozenset(lid for lid, b in zip(ids, bits) if b)
        out.append(MappingVector(ids, analog))
    return out


def _retrain_and_eval(model: Network, data, mapping: MappingVector,
                      mapper_cfg: MapperConfig, train_cfg: TrainingConfig,
                      analog_cfg: AnalogConfig, tag: str) -> ParetoPoint:
    work = model.copy()
    train_session(
        work, data.train_x, data.train_y,
        mapping=mapping, analog_cfg=analog_cfg, cfg=train_cfg,
        window=mapper_cfg.convergence_window,
        max_epochs=mapper_cfg.max_epochs_per_candidate,
        seed=mapper_cfg.seed, tag=f"ceiling-{tag}", t_eval=mapper_cfg.t_eval,
    )
    report = evaluate_mapping(
        work, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag=f"ceiling-{tag}", batch_size=train_cfg.batch_size,
    )
    return ParetoPoint(
        mac_ratio=report.mac_ratio,
        mean_accuracy=report.mean_accuracy,
        std_accuracy=report.std_accuracy,
        source="exhaustive",
        mapping=tuple(mapping.domain(lid) for lid in mapping.mappable),
    )


def exhaustive_ceiling(model: Network, data, mapper_cfg: MapperConfig,
                       train_cfg: TrainingConfig, analog_cfg: AnalogConfig,
                       jobs: int = 1) -> list[ParetoPoint]:
    """Retrain and evaluate every mapping of a small network.

    Refuses networks whose mapping count exceeds
    ``MAX_EXHAUSTIVE_MAPPINGS``; shrink the network or use the greedy
    mapper instead.
    """
    mappings = enumerate_mappings(model.descriptor)
    if len(mappings) > MAX_EXHAUSTIVE_MAPPINGS:
        raise ValueError(
            f"{len(mappings)} mappings exceed the exhaustive budget of "
            f"{MAX_EXHAUSTIVE_MAPPINGS}; use <= "
            f"{MAX_EXHAUSTIVE_MAPPINGS.bit_length() - 1} mappable layers or "
            "run the greedy mapper"
        )
    tasks = [
        (model, data, m, mapper_cfg, train_cfg, analog_cfg, str(i))
        for i, m in enumerate(mappings)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_ceiling_job, tasks, chunksize=1))
    else:
        points = [_ceiling_job(t) for t in tasks]
    return points


def _ceiling_job(task):
    return _retrain_and_eval(*task)


# ---------------------------------------------------------------------------
# multi-threshold / multi-seed sweep


@dataclass
class SweepRun:
    threshold: float
    seed: int
    point: ParetoPoint | None
    trace: tuple
    error: str = ""


@dataclass
class SweepResult:
    runs: list[SweepRun]

    @property
    def points(self) -> list[ParetoPoint]:
        return [r.point for r in self.runs if r.point is not None]

    @property
    def failures(self) -> list[SweepRun]:
        return [r for r in self.runs if r.point is None]

    def aggregate(self) -> dict[float, dict[str, float]]:
        """Per-threshold mean/std of mac ratio and accuracy over seeds."""
        by_thr: dict[float, list[ParetoPoint]] = {}
        for r in self.runs:
            if r.point is not None:
                by_thr.setdefault(r.threshold, []).append(r.point)
        out = {}
        for thr, pts in sorted(by_thr.items()):
            ratios = np.array([p.mac_ratio for p in pts])
            accs = np.array([p.mean_accuracy for p in pts])
            out[thr] = {
                "runs": len(pts),
                "mac_ratio_mean": float(ratios.mean()),
                "mac_ratio_std": float(ratios.std()),
                "accuracy_mean": float(accs.mean()),
                "accuracy_std": float(accs.std()),
            }
        return out


def _sweep_job(task):
    model, data, threshold, seed, mapper_cfg, train_cfg, analog_cfg = task
    try:
        cfg = replace(mapper_cfg, drop_threshold=threshold, seed=seed)
        work = model.copy()
        res = greedy_map(work, data, cfg, train_cfg, analog_cfg)
    except Exception as exc:  # individual failures recorded, sweep continues
        return SweepRun(threshold, seed, None, (), error=f"{type(exc).__name__}: {exc}")
    point = ParetoPoint(
        mac_ratio=res.final_report.mac_ratio,
        mean_accuracy=res.final_report.mean_accuracy,
        std_accuracy=res.final_report.std_accuracy,
        source=f"greedy(threshold={threshold})",
        mapping=tuple(res.mapping.domain(lid) for lid in res.mapping.mappable),
    )
    return SweepRun(threshold, seed, point, res.trace)


def sweep(model: Network, data, thresholds, seeds, mapper_cfg: MapperConfig,
          train_cfg: TrainingConfig, analog_cfg: AnalogConfig, jobs: int = 1) -> SweepResult:
    """One greedy run per (threshold, seed); failures are recorded, not fatal."""
    thresholds = list(thresholds)
    seeds = list(seeds)
    if not thresholds:
        raise ValueError("sweep needs at least one threshold")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    tasks = [
        (model, data, thr, seed, mapper_cfg, train_cfg, analog_cfg)
        for thr in thresholds
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_sweep_job, tasks, chunksize=1))
    else:
        runs = [_sweep_job(t) for t in tasks]
    return SweepResult(runs=runs)


def drift_study(model: Network, data, train_times, eval_times, *,
                mapper_cfg: MapperConfig, train_cfg: TrainingConfig,
                analog_cfg: AnalogConfig, reps: int = 20,
                batch_size: int = 256) -> dict[float, dict[float, tuple[float, float]]]:
    """Accuracy of the all-analog mapping over a training-time x read-time grid.

    For each training-time target the float model is retrained all-analog
    with drift simulated at that time; evaluation then programs each
    repetition once and reads the same devices at every requested time, so
    the time axis is paired (the same programmed instance decaying), not
    resampled.
    """
    from .rng import stream

    net = model.descriptor
    mapping = MappingVector.all_analog(net)
    results: dict[float, dict[float, tuple[float, float]]] = {}
    x, y = data.val_x, data.val_y
    n = x.shape[0]
    for t_train in train_times:
        work = model.copy()
        train_session(
            work, data.train_x, data.train_y,
            mapping=mapping, analog_cfg=analog_cfg, cfg=train_cfg,
            window=mapper_cfg.convergence_window,
            max_epochs=mapper_cfg.max_epochs_per_candidate,
            seed=mapper_cfg.seed, tag=f"drift-train-{t_train}", t_eval=t_train,
        )
        per_time: dict[float, list[float]] = {t: [] for t in eval_times}
        for rep in range(reps):
            prog_rng = stream(mapper_cfg.seed, "program", f"drift-{t_train}", rep)
            states = work.program_layers(mapping, analog_cfg, prog_rng)
            for t in eval_times:
                read_rng = stream(mapper_cfg.seed, "eval", f"drift-{t_train}-{t}", rep)
                correct = 0
                for start in range(0, n, batch_size):
                    logits = work.forward(
                        x[start : start + batch_size], mapping=mapping,
                        mode="programmed", analog_cfg=analog_cfg,
                        states=states, rng=read_rng, t=t,
                    )
                    correct += int(
                        (logits.data.argmax(axis=1) == y[start : start + batch_size]).sum()
                    )
                per_time[t].append(100.0 * correct / n)
        results[t_train] = {
            t: (float(np.mean(v)), float(np.std(v))) for t, v in per_time.items()
        }
    return results


def compare_to_ceiling(sweep_points, ceiling_points,
                       ratio_slack: float = 0.0, acc_slack: float = 0.0):
    """Sweep points dominated by an exhaustive point beyond both slacks.

    Points that beat the ceiling (above every exhaustive point at >= their
    ratio) are logged, since progressive retraining can exceed it.
    """
    ceiling = pareto_front(list(ceiling_points))
    violations = []
    for p in sweep_points:
        for q in ceiling:
            if (
                q.mac_ratio >= p.mac_ratio + ratio_slack
                and q.mean_accuracy >= p.mean_accuracy + acc_slack
            ):
                violations.append((p, q))
                break
        best_at_ratio = [q for q in ceiling if q.mac_ratio >= p.mac_ratio]
        if best_at_ratio and all(p.mean_accuracy > q.mean_accuracy for q in best_at_ratio):
            log.info(
                "sweep point (ratio=%.3f, acc=%.2f) exceeds the exhaustive ceiling",
                p.mac_ratio, p.mean_accuracy,
            )
    return violations
