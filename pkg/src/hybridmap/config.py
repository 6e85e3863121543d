"""Run configuration: strict JSON schema, flag overrides, content hashing.

Unknown keys anywhere in the file are rejected outright.  The resolved
configuration (every default materialised) is what gets hashed and embedded
in artifacts, so a manifest replays a run even if library defaults later
change.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .analog import AnalogConfig, ConverterSpec, DriftModel
from .dataset import DatasetSpec
from .mapper import MapperConfig
from .network import NetworkDescriptor, TileGeometry, descriptor_from_json, load_descriptor
from .optim import OptimizerConfig
from .perf import SystemParams
from .trainer import TrainingConfig


class ConfigError(ValueError):
    """Invalid run configuration (schema or value errors)."""


def _check_keys(obj: dict, allowed, where: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _get(obj: dict, key: str, default, where: str, kind=None):
    value = obj.get(key, default)
    if kind is not None and value is not None and not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class SweepConfig:
    thresholds: tuple[float, ...] = (0.5, 1.0, 3.0, 5.0, 10.0)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class DriftStudyConfig:
    train_times: tuple[float, ...] = (1.0, 60.0, 3600.0, 86400.0)
    eval_times: tuple[float, ...] = (0.0, 1.0, 60.0, 3600.0, 86400.0)
    reps: int = 20


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    network: str = "builtin:desk-cnn"
    network_inline: dict | None = None
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    dataset_path: str | None = None
    training: TrainingConfig = field(default_factory=TrainingConfig)
    analog: AnalogConfig = field(default_factory=AnalogConfig)
    mapper: MapperConfig = field(default_factory=MapperConfig)
    system: SystemParams = field(default_factory=SystemParams)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    drift_study: DriftStudyConfig = field(default_factory=DriftStudyConfig)
    jobs: int = 1

    def descriptor(self) -> NetworkDescriptor:
        if self.network_inline is not None:
            return descriptor_from_json(self.network_inline)
        if self.network.startswith("builtin:"):
            from .nets import builtin

            return builtin(self.network.split(":", 1)[1])
        return load_descriptor(self.network)

    def load_data(self):
        if self.dataset_path is not None:
            from .persist import load_dataset

            _, data = load_dataset(self.dataset_path)
            return data
        from .dataset import generate_synthetic

        return generate_synthetic(self.dataset)


# ---------------------------------------------------------------------------
# parsing


def _parse_optimizer(obj: dict, where: str, defaults: OptimizerConfig, batch: int) -> OptimizerConfig:
    _check_keys(obj, ("learning_rate", "momentum", "weight_decay", "schedule",
                      "t_max", "eta_min"), where)
    try:
        return OptimizerConfig(
            learning_rate=_get(obj, "learning_rate", defaults.learning_rate, where, (int, float)),
            momentum=_get(obj, "momentum", defaults.momentum, where, (int, float)),
            weight_decay=_get(obj, "weight_decay", defaults.weight_decay, where, (int, float)),
            schedule=_get(obj, "schedule", defaults.schedule, where, str),
            t_max=_get(obj, "t_max", defaults.t_max, where, int),
            eta_min=_get(obj, "eta_min", defaults.eta_min, where, (int, float)),
            batch_size=batch,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_training(obj: dict) -> TrainingConfig:
    where = "training"
    _check_keys(obj, ("batch_size", "pretrain_max_epochs", "pretrain_window",
                      "digital", "analog"), where)
    base = TrainingConfig()
    batch = _get(obj, "batch_size", base.batch_size, where, int)
    try:
        return TrainingConfig(
            digital=_parse_optimizer(obj.get("digital", {}), "training.digital",
                                     base.digital, batch),
            analog=_parse_optimizer(obj.get("analog", {}), "training.analog",
                                    base.analog, batch),
            pretrain_max_epochs=_get(obj, "pretrain_max_epochs", base.pretrain_max_epochs, where, int),
            pretrain_window=_get(obj, "pretrain_window", base.pretrain_window, where, int),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_converter(obj: dict, where: str, defaults: ConverterSpec) -> ConverterSpec:
    _check_keys(obj, ("clip_sigma", "levels"), where)
    clip = _get(obj, "clip_sigma", defaults.clip_sigma, where, (int, float, str))
    if isinstance(clip, str):
        if clip not in ("inf", "unbounded"):
            raise ConfigError(f"{where}.clip_sigma: unknown value {clip!r}")
        clip = math.inf
    levels = _get(obj, "levels", defaults.levels, where, int)
    try:
        return ConverterSpec(clip_sigma=float(clip), levels=levels)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_analog(obj: dict) -> AnalogConfig:
    where = "analog"
    _check_keys(obj, ("sigma_w", "sigma_inp", "sigma_out", "dac", "adc", "tile",
                      "t_eval", "drift", "compensate_drift"), where)
    base = AnalogConfig()
    tile_obj = obj.get("tile", {})
    _check_keys(tile_obj, ("rows", "cols"), "analog.tile")
    drift_obj = obj.get("drift", {})
    _check_keys(drift_obj, ("kind", "nu_mean", "nu_std", "t_ref"), "analog.drift")
    try:
        return AnalogConfig(
            sigma_w=_get(obj, "sigma_w", base.sigma_w, where, (int, float)),
            sigma_inp=_get(obj, "sigma_inp", base.sigma_inp, where, (int, float)),
            sigma_out=_get(obj, "sigma_out", base.sigma_out, where, (int, float)),
            dac=_parse_converter(obj.get("dac", {}), "analog.dac", base.dac),
            adc=_parse_converter(obj.get("adc", {}), "analog.adc", base.adc),
            tile=TileGeometry(
                rows=_get(tile_obj, "rows", 256, "analog.tile", int),
                cols=_get(tile_obj, "cols", 256, "analog.tile", int),
            ),
            t_eval=_get(obj, "t_eval", base.t_eval, where, (int, float)),
            drift=DriftModel(
                kind=_get(drift_obj, "kind", base.drift.kind, "analog.drift", str),
                nu_mean=_get(drift_obj, "nu_mean", base.drift.nu_mean, "analog.drift", (int, float)),
                nu_std=_get(drift_obj, "nu_std", base.drift.nu_std, "analog.drift", (int, float)),
                t_ref=_get(drift_obj, "t_ref", base.drift.t_ref, "analog.drift", (int, float)),
            ),
            compensate_drift=_get(obj, "compensate_drift", base.compensate_drift, where, bool),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_mapper(obj: dict, seed: int) -> MapperConfig:
    where = "mapper"
    _check_keys(obj, ("drop_threshold", "convergence_window", "max_epochs_per_candidate",
                      "eval_reps_inner", "eval_reps_final", "t_eval"), where)
    base = MapperConfig()
    try:
        return MapperConfig(
            drop_threshold=_get(obj, "drop_threshold", base.drop_threshold, where, (int, float)),
            convergence_window=_get(obj, "convergence_window", base.convergence_window, where, int),
            max_epochs_per_candidate=_get(obj, "max_epochs_per_candidate",
                                          base.max_epochs_per_candidate, where, int),
            eval_reps_inner=_get(obj, "eval_reps_inner", base.eval_reps_inner, where, int),
            eval_reps_final=_get(obj, "eval_reps_final", base.eval_reps_final, where, int),
            t_eval=_get(obj, "t_eval", base.t_eval, where, (int, float)),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_dataset(obj: dict):
    where = "dataset"
    kind = _get(obj, "kind", "synthetic", where, str)
    if kind == "external":
        _check_keys(obj, ("kind", "path", "format_version"), where)
        version = _get(obj, "format_version", 1, where, int)
        if version != 1:
            raise ConfigError(f"{where}: unsupported format_version {version}")
        path = _get(obj, "path", None, where, str)
        if path is None:
            raise ConfigError(f"{where}: external dataset needs a path")
        return DatasetSpec(), path
    if kind != "synthetic":
        raise ConfigError(f"{where}: unknown kind {kind!r}")
    _check_keys(obj, ("kind", "classes", "train", "val", "test", "height", "width",
                      "channels", "separation", "noise_level", "seed"), where)
    base = DatasetSpec()
    try:
        return (
            DatasetSpec(
                classes=_get(obj, "classes", base.classes, where, int),
                train=_get(obj, "train", base.train, where, int),
                val=_get(obj, "val", base.val, where, int),
                test=_get(obj, "test", base.test, where, int),
                height=_get(obj, "height", base.height, where, int),
                width=_get(obj, "width", base.width, where, int),
                channels=_get(obj, "channels", base.channels, where, int),
                separation=_get(obj, "separation", base.separation, where, (int, float)),
                noise_level=_get(obj, "noise_level", base.noise_level, where, (int, float)),
                seed=_get(obj, "seed", base.seed, where, int),
            ),
            None,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_system(obj: dict) -> SystemParams:
    where = "system"
    base = SystemParams()
    fields = ("cpu_peak_ops_per_s", "cpu_effective_fraction", "cpu_scalar_ops_per_s",
              "aimc_tile_latency", "aimc_transfer_bandwidth", "aimc_effective_fraction",
              "aimc_energy_eff", "digital_energy_eff", "dram_bandwidth",
              "bytes_per_element", "cache_reuse", "pack_ops_per_element",
              "post_ops_per_element", "static_power_w")
    _check_keys(obj, fields, where)
    kwargs = {}
    for name in fields:
        kwargs[name] = _get(obj, name, getattr(base, name), where, (int, float))
    try:
        return SystemParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_sweep(obj: dict) -> SweepConfig:
    where = "sweep"
    _check_keys(obj, ("thresholds", "seeds"), where)
    base = SweepConfig()
    thresholds = obj.get("thresholds", list(base.thresholds))
    seeds = obj.get("seeds", list(base.seeds))
    if not isinstance(thresholds, list) or not all(isinstance(t, (int, float)) for t in thresholds):
        raise ConfigError(f"{where}.thresholds: expected a list of numbers")
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"{where}.seeds: expected a list of ints")
    return SweepConfig(tuple(float(t) for t in thresholds), tuple(seeds))


def _parse_drift_study(obj: dict) -> DriftStudyConfig:
    where = "drift_study"
    _check_keys(obj, ("train_times", "eval_times", "reps"), where)
    base = DriftStudyConfig()
    tt = obj.get("train_times", list(base.train_times))
    et = obj.get("eval_times", list(base.eval_times))
    for name, times in (("train_times", tt), ("eval_times", et)):
        if not isinstance(times, list) or not all(isinstance(t, (int, float)) for t in times):
            raise ConfigError(f"{where}.{name}: expected a list of numbers")
    return DriftStudyConfig(
        tuple(float(t) for t in tt),
        tuple(float(t) for t in et),
        reps=_get(obj, "reps", base.reps, where, int),
    )


def parse_config(obj: dict) -> RunConfig:
    where = "config"
    _check_keys(obj, ("seed", "output_dir", "network", "dataset", "training",
                      "analog", "mapper", "system", "sweep", "drift_study", "jobs"), where)
    seed = _get(obj, "seed", 0, where, int)
    network = obj.get("network", "builtin:desk-cnn")
    inline = None
    if isinstance(network, dict):
        inline = network
        network = "<inline>"
    elif not isinstance(network, str):
        raise ConfigError("config.network: expected a path, builtin:<name>, or object")
    dataset, dataset_path = _parse_dataset(obj.get("dataset", {}))
    cfg = RunConfig(
        seed=seed,
        output_dir=_get(obj, "output_dir", "runs/out", where, str),
        network=network,
        network_inline=inline,
        dataset=dataset,
        dataset_path=dataset_path,
        training=_parse_training(obj.get("training", {})),
        analog=_parse_analog(obj.get("analog", {})),
        mapper=_parse_mapper(obj.get("mapper", {}), seed),
        system=_parse_system(obj.get("system", {})),
        sweep=_parse_sweep(obj.get("sweep", {})),
        drift_study=_parse_drift_study(obj.get("drift_study", {})),
        jobs=_get(obj, "jobs", 1, where, int),
    )
    try:
        cfg.descriptor()
    except (ValueError, OSError) as exc:
        raise ConfigError(f"config.network: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(obj)


# ---------------------------------------------------------------------------
# resolution and hashing


def _opt_dict(o: OptimizerConfig) -> dict:
    return {
        "learning_rate": o.learning_rate, "momentum": o.momentum,
        "weight_decay": o.weight_decay, "schedule": o.schedule,
        "t_max": o.t_max, "eta_min": o.eta_min,
    }


def resolved_dict(cfg: RunConfig) -> dict:
    """Fully materialised config; hashed and stored in manifests.

    ``output_dir`` and ``jobs`` are execution details, not inputs to any
    numeric result, so they are deliberately left out: replaying a manifest
    into a different directory or with a different worker count must
    reproduce artifacts byte-identically.
    """
    a, m, s = cfg.analog, cfg.mapper, cfg.system
    if cfg.dataset_path is not None:
        dataset = {"kind": "external", "path": cfg.dataset_path, "format_version": 1}
    else:
        d = cfg.dataset
        dataset = {
            "kind": "synthetic", "classes": d.classes, "train": d.train, "val": d.val,
            "test": d.test, "height": d.height, "width": d.width, "channels": d.channels,
            "separation": d.separation, "noise_level": d.noise_level, "seed": d.seed,
        }
    return {
        "seed": cfg.seed,
        "network": cfg.network_inline if cfg.network_inline is not None else cfg.network,
        "dataset": dataset,
        "training": {
            "batch_size": cfg.training.batch_size,
            "pretrain_max_epochs": cfg.training.pretrain_max_epochs,
            "pretrain_window": cfg.training.pretrain_window,
            "digital": _opt_dict(cfg.training.digital),
            "analog": _opt_dict(cfg.training.analog),
        },
        "analog": {
            "sigma_w": a.sigma_w, "sigma_inp": a.sigma_inp, "sigma_out": a.sigma_out,
            "dac": {"clip_sigma": "inf" if math.isinf(a.dac.clip_sigma) else a.dac.clip_sigma,
                    "levels": a.dac.levels},
            "adc": {"clip_sigma": "inf" if math.isinf(a.adc.clip_sigma) else a.adc.clip_sigma,
                    "levels": a.adc.levels},
            "tile": {"rows": a.tile.rows, "cols": a.tile.cols},
            "t_eval": a.t_eval,
            "drift": {"kind": a.drift.kind, "nu_mean": a.drift.nu_mean,
                      "nu_std": a.drift.nu_std, "t_ref": a.drift.t_ref},
            "compensate_drift": a.compensate_drift,
        },
        "mapper": {
            "drop_threshold": m.drop_threshold,
            "convergence_window": m.convergence_window,
            "max_epochs_per_candidate": m.max_epochs_per_candidate,
            "eval_reps_inner": m.eval_reps_inner,
            "eval_reps_final": m.eval_reps_final,
            "t_eval": m.t_eval,
        },
        "system": {
            "cpu_peak_ops_per_s": s.cpu_peak_ops_per_s,
            "cpu_effective_fraction": s.cpu_effective_fraction,
            "cpu_scalar_ops_per_s": s.cpu_scalar_ops_per_s,
            "aimc_tile_latency": s.aimc_tile_latency,
            "aimc_transfer_bandwidth": s.aimc_transfer_bandwidth,
            "aimc_effective_fraction": s.aimc_effective_fraction,
            "aimc_energy_eff": s.aimc_energy_eff,
            "digital_energy_eff": s.digital_energy_eff,
            "dram_bandwidth": s.dram_bandwidth,
            "bytes_per_element": s.bytes_per_element,
            "cache_reuse": s.cache_reuse,
            "pack_ops_per_element": s.pack_ops_per_element,
            "post_ops_per_element": s.post_ops_per_element,
            "static_power_w": s.static_power_w,
        },
        "sweep": {"thresholds": list(cfg.sweep.thresholds), "seeds": list(cfg.sweep.seeds)},
        "drift_study": {
            "train_times": list(cfg.drift_study.train_times),
            "eval_times": list(cfg.drift_study.eval_times),
            "reps": cfg.drift_study.reps,
        },
    }


def config_hash(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
