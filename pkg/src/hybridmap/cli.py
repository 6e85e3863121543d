"""Command-line entry point.

Subcommands: ``train`` (float baseline), ``map`` (one mapping strategy),
``sweep`` (thresholds x seeds), ``ceiling`` (exhaustive retraining), ``perf``
(analytical latency/energy), ``drift-study`` and ``report``.  Every command
reads a JSON run config (all keys optional, unknown keys rejected), applies
flag overrides, and writes versioned artifacts plus a ``manifest.json`` that
replays the run bit-identically via ``--from-manifest``.

Exit codes: 0 success, 1 configuration error, 2 partial failure (some sweep
or ceiling jobs failed), 3 total failure.
"""

from __future__ import annotations

import os

# deterministic single-threaded BLAS: results must not depend on thread count
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import flms_mapping, run_baseline
from .config import ConfigError, RunConfig, config_hash, load_config, parse_config, resolved_dict
from .explorer import (
    ParetoPoint,
    drift_study,
    elbow,
    enumerate_mappings,
    exhaustive_ceiling,
    pareto_front,
    sweep as run_sweep,
)
from .mapper import greedy_map
from .model import Network
from .network import MappingVector, descriptor_to_json, mac_ratio
from .perf import estimate
from .persist import (
    load_manifest,
    load_model_into,
    save_model,
    write_csv,
    write_dat,
    write_json,
    write_manifest,
)
from .trainer import digital_accuracy, pretrain_float

log = logging.getLogger("hybridmap")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_TOTAL = 3

STRATEGIES = ("greedy", "all-digital", "all-analog", "flms", "sensitivity")


def _add_common(sub):
    sub.add_argument("--config", help="run config JSON")
    sub.add_argument("--from-manifest", help="replay the config stored in a manifest")
    sub.add_argument("--out", help="output directory (overrides config)")
    sub.add_argument("--seed", type=int, help="global seed override")
    sub.add_argument("--jobs", type=int, help="worker processes for sweep/ceiling")
    sub.add_argument("--threshold", type=float, help="accuracy drop threshold override")
    sub.add_argument("--t-eval", type=float, help="evaluation time override (seconds)")
    sub.add_argument("--sigma-w", type=float, help="programming noise override")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="PATH=VALUE",
                     help="set any config entry, e.g. --set analog.sigma_out=0.05 "
                          "(VALUE parsed as JSON, repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridmap",
        description="simulate and optimise hybrid analog/digital DNN layer mappings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="pre-train the floating-point baseline")
    _add_common(p)

    p = sub.add_parser("map", help="run one mapping strategy")
    _add_common(p)
    p.add_argument("--strategy", choices=STRATEGIES, default="greedy")
    p.add_argument("--model", help="pre-trained model container (defaults to training one)")
    p.add_argument("--flms-input", choices=("float", "hwa"), default="float",
                   help="flms starting point: float network or all-analog retrained")
    p.add_argument("--with-retrain", action="store_true",
                   help="sensitivity strategy: one final retraining pass")
    p.add_argument("--sensitivity-metric", choices=("ablation", "fisher"), default="ablation")

    p = sub.add_parser("sweep", help="greedy runs over thresholds x seeds")
    _add_common(p)
    p.add_argument("--model", help="pre-trained model container")

    p = sub.add_parser("ceiling", help="retrain every mapping of a small network")
    _add_common(p)
    p.add_argument("--model", help="pre-trained model container")

    p = sub.add_parser("perf", help="analytical latency/energy of a mapping")
    _add_common(p)
    p.add_argument("--mapping", help="mapping JSON produced by `map`")
    p.add_argument("--strategy", choices=("all-digital", "all-analog", "flms"),
                   default="all-analog", help="structural mapping when no --mapping given")

    p = sub.add_parser("drift-study", help="accuracy over programming/read time grid")
    _add_common(p)
    p.add_argument("--model", help="pre-trained model container")

    p = sub.add_parser("report", help="aggregate and hash-check a run directory")
    p.add_argument("directory")
    return parser


def _load_cfg(args) -> tuple[RunConfig, dict, str]:
    if getattr(args, "from_manifest", None):
        raw = load_manifest(args.from_manifest)["config"]
    elif getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
    else:
        raw = {}
    # flag overrides happen on the raw dict so they take part in the hash
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threshold is not None:
        raw.setdefault("mapper", {})["drop_threshold"] = args.threshold
    if args.t_eval is not None:
        raw.setdefault("mapper", {})["t_eval"] = args.t_eval
        raw.setdefault("analog", {})["t_eval"] = args.t_eval
    if args.sigma_w is not None:
        raw.setdefault("analog", {})["sigma_w"] = args.sigma_w
    for item in getattr(args, "overrides", []):
        if "=" not in item:
            raise ConfigError(f"--set expects PATH=VALUE, got {item!r}")
        path, _, value = item.partition("=")
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass  # bare strings stay strings
        node = raw
        keys = path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {path}: {key} is not an object")
        node[keys[-1]] = value
    cfg = parse_config(raw)
    if args.out:
        cfg.output_dir = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    resolved = resolved_dict(cfg)
    return cfg, resolved, config_hash(resolved)


def _prepare(cfg: RunConfig, model_path: str | None):
    """Dataset plus a pre-trained float model (loaded or trained now)."""
    data = cfg.load_data()
    net = cfg.descriptor()
    model = Network.build(net, cfg.seed)
    pretrain_info = {}
    if model_path:
        meta = load_model_into(model_path, model)
        pretrain_info = {"loaded_from": model_path, "meta": meta}
    else:
        res = pretrain_float(model, data.train_x, data.train_y, cfg.training, cfg.seed)
        pretrain_info = {"epochs": res.epochs, "best_loss": res.best_loss}
    return data, model, pretrain_info


def _point_rows(points):
    return [
        [p.source, p.mac_ratio, p.mean_accuracy, p.std_accuracy, "".join(
            "a" if d == "analog" else "d" for d in p.mapping)]
        for p in points
    ]


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, model, info = _prepare(cfg, None)
    report = {
        "config_hash": chash,
        "pretrain": info,
        "val_accuracy": digital_accuracy(model, data.val_x, data.val_y, cfg.training.batch_size),
        "test_accuracy": digital_accuracy(model, data.test_x, data.test_y, cfg.training.batch_size),
    }
    save_model(outdir / "model.bin", model,
               {"config_hash": chash, "seed": cfg.seed,
                "network": descriptor_to_json(model.descriptor)})
    write_json(outdir / "train_report.json", report)
    write_manifest(outdir, "train", resolved, chash, ["model.bin", "train_report.json"])
    print(f"val accuracy {report['val_accuracy']:.2f}, test {report['test_accuracy']:.2f}")
    return EXIT_OK


def cmd_map(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, model, _ = _prepare(cfg, args.model)
    outputs = []
    if args.strategy == "greedy":
        res = greedy_map(model, data, cfg.mapper, cfg.training, cfg.analog)
        mapping, report = res.mapping, res.final_report
        rows = [
            [e.layer_id, e.macs, e.decision, e.mean_accuracy, e.std_accuracy, e.epochs]
            for e in res.trace
        ]
        write_csv(outdir / "trace.csv",
                  ["layer_id", "macs", "decision", "mean_acc", "std_acc", "epochs"],
                  rows, chash)
        outputs.append("trace.csv")
        extra = {"float_accuracy": res.float_accuracy, "sessions": res.sessions}
    else:
        kwargs = {}
        if args.strategy == "flms":
            kwargs["float_input"] = args.flms_input == "float"
        if args.strategy == "sensitivity":
            kwargs["retrain"] = args.with_retrain
            kwargs["metric"] = args.sensitivity_metric
        res = run_baseline(args.strategy, model, data, cfg.mapper, cfg.training, cfg.analog, **kwargs)
        mapping, report = res.mapping, res.report
        extra = {"sessions": res.sessions, "diverged": res.diverged}
    write_json(outdir / "mapping.json",
               {"config_hash": chash, "strategy": args.strategy, "mapping": mapping.to_json()})
    write_json(outdir / "map_report.json", {
        "config_hash": chash,
        "strategy": args.strategy,
        "mac_ratio": report.mac_ratio,
        "mean_accuracy": report.mean_accuracy,
        "std_accuracy": report.std_accuracy,
        "per_rep": list(report.per_rep),
        "t_eval": report.t_eval,
        **extra,
    })
    save_model(outdir / "mapped_model.bin", model,
               {"config_hash": chash, "seed": cfg.seed, "strategy": args.strategy,
                "network": descriptor_to_json(model.descriptor)})
    outputs += ["mapping.json", "map_report.json", "mapped_model.bin"]
    write_manifest(outdir, "map", resolved, chash, outputs)
    print(f"{args.strategy}: mac_ratio {report.mac_ratio:.3f}, "
          f"accuracy {report.mean_accuracy:.2f} +/- {report.std_accuracy:.2f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, model, _ = _prepare(cfg, args.model)
    result = run_sweep(model, data, cfg.sweep.thresholds, cfg.sweep.seeds,
                       cfg.mapper, cfg.training, cfg.analog, jobs=cfg.jobs)
    rows = []
    for run in sorted(result.runs, key=lambda r: (r.threshold, r.seed)):
        if run.point is None:
            rows.append([run.threshold, run.seed, "failed", "", "", run.error])
        else:
            rows.append([run.threshold, run.seed, "ok", run.point.mac_ratio,
                         run.point.mean_accuracy, run.point.std_accuracy])
    write_csv(outdir / "sweep.csv",
              ["threshold", "seed", "status", "mac_ratio", "mean_acc", "std_acc"],
              rows, chash)
    agg_rows = [
        [thr, a["runs"], a["mac_ratio_mean"], a["mac_ratio_std"],
         a["accuracy_mean"], a["accuracy_std"]]
        for thr, a in result.aggregate().items()
    ]
    write_csv(outdir / "sweep_aggregate.csv",
              ["threshold", "runs", "mac_ratio_mean", "mac_ratio_std",
               "accuracy_mean", "accuracy_std"],
              agg_rows, chash)
    outputs = ["sweep.csv", "sweep_aggregate.csv"]
    if result.points:
        front = pareto_front(result.points)
        knee = elbow(front)
        write_json(outdir / "front.json", {
            "config_hash": chash,
            "front": [{"mac_ratio": p.mac_ratio, "mean_accuracy": p.mean_accuracy,
                       "std_accuracy": p.std_accuracy, "source": p.source} for p in front],
            "elbow": {"mac_ratio": knee.mac_ratio, "mean_accuracy": knee.mean_accuracy},
        })
        write_dat(outdir / "front.dat",
                  [(p.mac_ratio, p.mean_accuracy) for p in front], chash,
                  comment="mac_ratio mean_accuracy")
        outputs += ["front.json", "front.dat"]
    write_manifest(outdir, "sweep", resolved, chash, outputs)
    n_fail = len(result.failures)
    print(f"sweep: {len(result.runs) - n_fail}/{len(result.runs)} runs ok")
    if n_fail == len(result.runs):
        return EXIT_TOTAL
    if n_fail:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_ceiling(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, model, _ = _prepare(cfg, args.model)
    try:
        points = exhaustive_ceiling(model, data, cfg.mapper, cfg.training, cfg.analog,
                                    jobs=cfg.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_csv(outdir / "ceiling.csv",
              ["source", "mac_ratio", "mean_acc", "std_acc", "mapping"],
              _point_rows(points), chash)
    front = pareto_front(points)
    write_json(outdir / "ceiling_front.json", {
        "config_hash": chash,
        "mappings_evaluated": len(points),
        "front": [{"mac_ratio": p.mac_ratio, "mean_accuracy": p.mean_accuracy} for p in front],
    })
    write_dat(outdir / "ceiling_front.dat",
              [(p.mac_ratio, p.mean_accuracy) for p in front], chash,
              comment="mac_ratio mean_accuracy")
    write_manifest(outdir, "ceiling", resolved, chash,
                   ["ceiling.csv", "ceiling_front.json", "ceiling_front.dat"])
    print(f"ceiling: {len(points)} mappings evaluated, front size {len(front)}")
    return EXIT_OK


def cmd_perf(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    net = cfg.descriptor()
    if args.mapping:
        with open(args.mapping) as fh:
            mapping = MappingVector.from_json(json.load(fh)["mapping"], net)
    elif args.strategy == "all-digital":
        mapping = MappingVector.all_digital(net)
    elif args.strategy == "flms":
        mapping = flms_mapping(net)
    else:
        mapping = MappingVector.all_analog(net)
    report = estimate(net, mapping, cfg.system)
    write_json(outdir / "perf.json",
               {"config_hash": chash, "mac_ratio": mac_ratio(net, mapping),
                **report.to_json()})
    rows = [
        [lp.layer_id, lp.domain, lp.mvm_latency, lp.aux_latency, lp.dynamic_energy]
        for lp in report.per_layer
    ]
    write_csv(outdir / "perf.csv",
              ["layer_id", "domain", "mvm_latency_s", "aux_latency_s", "dynamic_energy_j"],
              rows, chash)
    write_manifest(outdir, "perf", resolved, chash, ["perf.json", "perf.csv"])
    print(f"speedup {report.speedup:.2f}x, energy gain {report.energy_gain:.2f}x")
    return EXIT_OK


def cmd_drift_study(args) -> int:
    cfg, resolved, chash = _load_cfg(args)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, model, _ = _prepare(cfg, args.model)
    grid = drift_study(
        model, data, cfg.drift_study.train_times, cfg.drift_study.eval_times,
        mapper_cfg=cfg.mapper, train_cfg=cfg.training, analog_cfg=cfg.analog,
        reps=cfg.drift_study.reps, batch_size=cfg.training.batch_size,
    )
    rows = []
    outputs = ["drift.csv"]
    for t_train in cfg.drift_study.train_times:
        cols = []
        for t in cfg.drift_study.eval_times:
            mean, std = grid[t_train][t]
            rows.append([t_train, t, mean, std])
            cols.append((t, mean, std))
        name = f"drift_train_{t_train:g}.dat"
        write_dat(outdir / name, cols, chash, comment="t_eval mean_acc std_acc")
        outputs.append(name)
    write_csv(outdir / "drift.csv", ["t_train", "t_eval", "mean_acc", "std_acc"],
              rows, chash)
    write_manifest(outdir, "drift-study", resolved, chash, outputs)
    print(f"drift study: {len(rows)} grid points")
    return EXIT_OK


def cmd_report(args) -> int:
    outdir = Path(args.directory)
    manifest_path = outdir / "manifest.json"
    if not manifest_path.exists():
        print(f"error: no manifest in {outdir}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = load_manifest(manifest_path)
    expect = manifest["config_hash"]
    mismatches = []
    for name in manifest["outputs"]:
        path = outdir / name
        if not path.exists():
            mismatches.append(f"{name}: missing")
            continue
        found = None
        if name.endswith(".json"):
            with open(path) as fh:
                found = json.load(fh).get("config_hash")
        elif name.endswith((".csv", ".dat")):
            head = path.read_text().splitlines()[0]
            if head.startswith("# config_hash="):
                found = head.split("=", 1)[1]
        else:
            continue
        if found != expect:
            mismatches.append(f"{name}: config_hash {found} != {expect}")
    if mismatches:
        for m in mismatches:
            print(f"error: {m}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {
        "command": manifest["command"],
        "config_hash": expect,
        "outputs": manifest["outputs"],
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "map": cmd_map,
    "sweep": cmd_sweep,
    "ceiling": cmd_ceiling,
    "perf": cmd_perf,
    "drift-study": cmd_drift_study,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
