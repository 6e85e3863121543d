"""Reference mapping strategies the greedy mapper is compared against.

* all-digital: the float network untouched.
* all-analog: every mappable layer analog, one global noisy retraining pass.
* flms: first and last mappable layers digital, everything else analog, one
  retraining pass; the mapping is a pure function of topology.
* sensitivity: starting from an all-analog hardware-aware-trained network,
  convert layers to digital from most to least noise-sensitive until the
  accuracy constraint holds (optionally retraining once at the end).  No
  per-candidate retraining is performed.

All baselines report accuracy through the same repeated-programming
evaluation protocol as the greedy mapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analog import AnalogConfig
from .mapper import EvalReport, MapperConfig, evaluate_mapping
from .model import Network
from .network import ANALOG, DIGITAL, MappingVector, NetworkDescriptor
from .rng import stream
from .tensor import softmax_cross_entropy
from .trainer import TrainingConfig, digital_accuracy, train_session

BASELINE_KINDS = ("all-digital", "all-analog", "flms", "sensitivity")


@dataclass
class BaselineResult:
    kind: str
    mapping: MappingVector
    report: EvalReport
    sessions: int
    diverged: bool = False


def flms_mapping(net: NetworkDescriptor) -> MappingVector:
    """First and last mappable layers digital, all others analog."""
    ids = net.mappable_ids
    analog = frozenset(ids[1:-1]) if len(ids) > 2 else frozenset()
    return MappingVector(ids, analog)


def _retrain(model, data, mapping, mapper_cfg, train_cfg, analog_cfg, tag):
    return train_session(
        model, data.train_x, data.train_y,
        mapping=mapping, analog_cfg=analog_cfg, cfg=train_cfg,
        window=mapper_cfg.convergence_window,
        max_epochs=mapper_cfg.max_epochs_per_candidate,
        seed=mapper_cfg.seed, tag=tag, t_eval=mapper_cfg.t_eval,
    )


def all_digital_map(model: Network, data, mapper_cfg: MapperConfig,
                    train_cfg: TrainingConfig, analog_cfg: AnalogConfig) -> BaselineResult:
    mapping = MappingVector.all_digital(model.descriptor)
    report = evaluate_mapping(
        model, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag="all-digital", batch_size=train_cfg.batch_size,
    )
    return BaselineResult("all-digital", mapping, report, sessions=0)


def all_analog_map(model: Network, data, mapper_cfg: MapperConfig,
                   train_cfg: TrainingConfig, analog_cfg: AnalogConfig) -> BaselineResult:
    """Everything analog plus one global noisy retraining pass.

    Divergence is reported, not rolled back; this baseline has no fallback.
    """
    mapping = MappingVector.all_analog(model.descriptor)
    result = _retrain(model, data, mapping, mapper_cfg, train_cfg, analog_cfg, "all-analog")
    report = evaluate_mapping(
        model, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag="all-analog", batch_size=train_cfg.batch_size,
    )
    return BaselineResult("all-analog", mapping, report, sessions=1, diverged=result.diverged)


def flms_map(model: Network, data, mapper_cfg: MapperConfig,
             train_cfg: TrainingConfig, analog_cfg: AnalogConfig,
             float_input: bool = True) -> BaselineResult:
    """First/last-digital mapping with a single retraining pass.

    With ``float_input=False`` the starting point is the all-analog
    hardware-aware-retrained network instead of the float one.
    """
    sessions = 0
    if not float_input:
        pre = all_analog_map(model, data, mapper_cfg, train_cfg, analog_cfg)
        sessions += pre.sessions
    mapping = flms_mapping(model.descriptor)
    result = _retrain(model, data, mapping, mapper_cfg, train_cfg, analog_cfg, "flms")
    sessions += 1
    report = evaluate_mapping(
        model, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag="flms", batch_size=train_cfg.batch_size,
    )
    return BaselineResult("flms", mapping, report, sessions=sessions, diverged=result.diverged)


# ---------------------------------------------------------------------------
# sensitivity-ordered digital conversion


def ablation_sensitivity(model: Network, data, mapper_cfg: MapperConfig,
                         analog_cfg: AnalogConfig, batch_size: int = 256) -> dict[int, float]:
    """Accuracy drop when exactly one layer runs analog, per mappable layer.

    Empirical single-layer ablation, averaged over the inner repetition
    count; larger drop = more sensitive.
    """
    net = model.descriptor
    base = MappingVector.all_digital(net)
    ref = evaluate_mapping(
        model, base, analog_cfg, data.val_x, data.val_y,
        reps=1, t_eval=mapper_cfg.t_eval, seed=mapper_cfg.seed,
        tag="sens-ref", batch_size=batch_size,
    ).mean_accuracy
    scores = {}
    for lid in net.mappable_ids:
        only = base.with_domain(lid, ANALOG)
        rep = evaluate_mapping(
            model, only, analog_cfg, data.val_x, data.val_y,
            reps=mapper_cfg.eval_reps_inner, t_eval=mapper_cfg.t_eval,
            seed=mapper_cfg.seed, tag=f"sens-{lid}", batch_size=batch_size,
        )
        scores[lid] = ref - rep.mean_accuracy
    return scores


def fisher_sensitivity(model: Network, data, mapper_cfg: MapperConfig,
                       batch_size: int = 256) -> dict[int, float]:
    """Diagonal-Fisher proxy: mean squared weight gradient per layer."""
    logits = model.forward(data.val_x[:batch_size], mode="digital")
    loss = softmax_cross_entropy(logits, data.val_y[:batch_size])
    for p in model.parameters():
        p.grad = None
    loss.backward()
    scores = {}
    for lid in model.descriptor.mappable_ids:
        layer = model.layer(lid)
        scores[lid] = float((layer.weight.grad**2).mean())
    return scores


def sensitivity_map(model: Network, data, mapper_cfg: MapperConfig,
                    train_cfg: TrainingConfig, analog_cfg: AnalogConfig,
                    retrain: bool = False, metric: str = "ablation") -> BaselineResult:
    """Sensitivity-ordered digital conversion from an all-analog start.

    ``model`` must already be hardware-aware trained all-analog (use
    :func:`all_analog_map` first).  Layers are converted to digital one at a
    time, most sensitive first, until the mean accuracy drop against the
    digital reference of the same weights satisfies the threshold or no
    analog layer remains.  No per-candidate retraining happens; with
    ``retrain=True`` one final retraining pass runs on the result.
    """
    net = model.descriptor
    if metric == "ablation":
        scores = ablation_sensitivity(model, data, mapper_cfg, analog_cfg,
                                      batch_size=train_cfg.batch_size)
    elif metric == "fisher":
        scores = fisher_sensitivity(model, data, mapper_cfg, batch_size=train_cfg.batch_size)
    else:
        raise ValueError(f"unknown sensitivity metric {metric!r}")
    order = sorted(net.mappable_ids, key=lambda lid: (-scores[lid], lid))
    ref_acc = digital_accuracy(model, data.val_x, data.val_y, train_cfg.batch_size)
    mapping = MappingVector.all_analog(net)
    sessions = 0
    step = 0
    while True:
        rep = evaluate_mapping(
            model, mapping, analog_cfg, data.val_x, data.val_y,
            reps=mapper_cfg.eval_reps_inner, t_eval=mapper_cfg.t_eval,
            seed=mapper_cfg.seed, tag=f"sens-step-{step}", batch_size=train_cfg.batch_size,
        )
        if ref_acc - rep.mean_accuracy <= mapper_cfg.drop_threshold or not mapping.analog:
            break
        next_digital = next(lid for lid in order if mapping.is_analog(lid))
        mapping = mapping.with_domain(next_digital, DIGITAL)
        step += 1
    diverged = False
    if retrain:
        result = _retrain(model, data, mapping, mapper_cfg, train_cfg, analog_cfg, "sens-retrain")
        sessions += 1
        diverged = result.diverged
    report = evaluate_mapping(
        model, mapping, analog_cfg, data.val_x, data.val_y,
        reps=mapper_cfg.eval_reps_final, t_eval=mapper_cfg.t_eval,
        seed=mapper_cfg.seed, tag="sensitivity", batch_size=train_cfg.batch_size,
    )
    kind = "sensitivity-retrained" if retrain else "sensitivity"
    return BaselineResult(kind, mapping, report, sessions=sessions, diverged=diverged)


def run_baseline(kind: str, model: Network, data, mapper_cfg: MapperConfig,
                 train_cfg: TrainingConfig, analog_cfg: AnalogConfig, **kwargs) -> BaselineResult:
    if kind == "all-digital":
        return all_digital_map(model, data, mapper_cfg, train_cfg, analog_cfg)
    if kind == "all-analog":
        return all_analog_map(model, data, mapper_cfg, train_cfg, analog_cfg)
    if kind == "flms":
        return flms_map(model, data, mapper_cfg, train_cfg, analog_cfg, **kwargs)
    if kind == "sensitivity":
        pre = all_analog_map(model, data, mapper_cfg, train_cfg, analog_cfg)
        res = sensitivity_map(model, data, mapper_cfg, train_cfg, analog_cfg, **kwargs)
        res.sessions += pre.sessions
        return res
    raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINE_KINDS}")
