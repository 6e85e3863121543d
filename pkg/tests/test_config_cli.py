import json
import math
from pathlib import Path

import numpy as np
import pytest

from hybridmap.cli import main
from hybridmap.config import (
    ConfigError,
    config_hash,
    load_config,
    parse_config,
    resolved_dict,
)
from hybridmap.dataset import DatasetSpec, generate_synthetic
from hybridmap.model import Network
from hybridmap.network import build_network, descriptor_to_json
from hybridmap.persist import (
    load_model_into,
    read_container,
    read_csv,
    save_dataset,
    save_model,
    write_container,
    write_csv,
)
from tests.conftest import tiny_net, tiny_spec


# -- config ------------------------------------------------------------------


def test_defaults_parse_and_descriptor_builds():
    cfg = parse_config({})
    net = cfg.descriptor()
    assert len(net.mappable_ids) == 6  # default desk CNN


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys.*bogus"):
        parse_config({"bogus": 1})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="training.digital"):
        parse_config({"training": {"digital": {"lr": 0.1}}})
    with pytest.raises(ConfigError, match="analog.drift"):
        parse_config({"analog": {"drift": {"tau": 3}}})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        parse_config({"mapper": {"drop_threshold": -1}})
    with pytest.raises(ConfigError):
        parse_config({"training": {"batch_size": "many"}})
    with pytest.raises(ConfigError):
        parse_config({"dataset": {"kind": "filesystem"}})
    with pytest.raises(ConfigError):
        parse_config({"network": "builtin:nope"})


def test_converter_inf_clip_roundtrip():
    cfg = parse_config({"analog": {"dac": {"clip_sigma": "inf"}}})
    assert math.isinf(cfg.analog.dac.clip_sigma)
    resolved = resolved_dict(cfg)
    assert resolved["analog"]["dac"]["clip_sigma"] == "inf"
    # the resolved dict must parse back to the same hash (fixed point)
    again = parse_config(resolved | {"output_dir": "x"})
    assert config_hash(resolved_dict(again)) == config_hash(resolved)


def test_hash_ignores_output_dir_and_jobs():
    a = parse_config({"output_dir": "runs/a", "jobs": 1})
    b = parse_config({"output_dir": "runs/b", "jobs": 7})
    assert config_hash(resolved_dict(a)) == config_hash(resolved_dict(b))


def test_hash_sensitive_to_seed():
    a = parse_config({"seed": 1})
    b = parse_config({"seed": 2})
    assert config_hash(resolved_dict(a)) != config_hash(resolved_dict(b))


def test_load_config_reports_bad_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)


# -- persistence ---------------------------------------------------------------


def test_container_roundtrip(tmp_path):
    path = tmp_path / "c.bin"
    a = np.arange(12, dtype=np.float64).reshape(3, 4) / 7
    b = np.array([1, 2, 3], dtype=np.int64)
    write_container(path, [("a", a), ("b", b)], {"note": "x"})
    meta, buf = read_container(path)
    assert meta == {"note": "x"}
    np.testing.assert_allclose(buf["a"], a.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(buf["b"], b)


def test_container_truncation_detected(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, [("a", np.ones(100))], {})
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(ValueError, match="truncated"):
        read_container(path)


def test_model_roundtrip_through_float32(tmp_path):
    model = Network.build(tiny_net(), seed=1)
    path = tmp_path / "m.bin"
    save_model(path, model, {"seed": 1})
    other = Network.build(tiny_net(), seed=2)
    meta = load_model_into(path, other)
    assert meta["seed"] == 1
    for la, lb in zip(model.layers, other.layers):
        np.testing.assert_allclose(la.weight.data, lb.weight.data, atol=1e-6)


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    rows = [[1, 0.1234567890123456789, "ok"], [2, 2.5, "x"]]
    write_csv(path, ["a", "b", "c"], rows, "deadbeef")
    h, header, body = read_csv(path)
    assert h == "deadbeef"
    assert header == ["a", "b", "c"]
    assert float(body[0][1]) == 0.1234567890123456789


# -- CLI -----------------------------------------------------------------------


def micro_config(tmp_path, **overrides):
    """A config small enough for CLI runs to finish in seconds."""
    net = {
        "input_shape": [1, 8, 8],
        "classes": 4,
        "layers": [
            {"kind": "conv", "filters": 4, "kernel": 3, "padding": 1, "pool": 2,
             "activation": "relu"},
            {"kind": "fc", "out_features": 12, "activation": "relu"},
            {"kind": "fc", "out_features": 4, "activation": "none"},
        ],
    }
    cfg = {
        "seed": 5,
        "output_dir": str(tmp_path / "out"),
        "network": net,
        "dataset": {"kind": "synthetic", "classes": 4, "train": 160, "val": 64,
                    "test": 64, "height": 8, "width": 8, "separation": 8.0},
        "training": {
            "batch_size": 64,
            "pretrain_max_epochs": 6,
            "pretrain_window": 2,
            "digital": {"learning_rate": 0.05, "momentum": 0.9, "t_max": 6},
            "analog": {"learning_rate": 0.02, "momentum": 0.9, "t_max": 6},
        },
        "mapper": {"convergence_window": 2, "max_epochs_per_candidate": 2,
                   "eval_reps_inner": 2, "eval_reps_final": 3},
        "sweep": {"thresholds": [5.0, 50.0], "seeds": [0, 1]},
        "drift_study": {"train_times": [1.0], "eval_times": [20.0, 86400.0], "reps": 2},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_cli_train_writes_artifacts(tmp_path, capsys):
    cfg = micro_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert (out / "model.bin").exists()
    assert (out / "manifest.json").exists()
    report = json.loads((out / "train_report.json").read_text())
    manifest = json.loads((out / "manifest.json").read_text())
    assert report["config_hash"] == manifest["config_hash"]


def test_cli_map_all_digital_reports_zero_ratio(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["map", "--config", str(cfg), "--strategy", "all-digital"]) == 0
    report = json.loads((tmp_path / "out" / "map_report.json").read_text())
    assert report["mac_ratio"] == 0.0
    assert report["std_accuracy"] == 0.0


def test_cli_map_greedy_writes_trace(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["map", "--config", str(cfg), "--strategy", "greedy",
                 "--threshold", "50.0"]) == 0
    h, header, rows = read_csv(tmp_path / "out" / "trace.csv")
    assert header == ["layer_id", "macs", "decision", "mean_acc", "std_acc", "epochs"]
    assert len(rows) == 3  # one entry per mappable layer
    mapping = json.loads((tmp_path / "out" / "mapping.json").read_text())
    assert set(mapping["mapping"]) == {"0", "1", "2"}


def test_cli_sweep_rerun_is_byte_identical(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["sweep", "--config", str(cfg)]) == 0
    out1 = tmp_path / "out"
    first = {p.name: p.read_bytes() for p in out1.glob("*.csv")}
    assert len(first) == 2
    out2 = tmp_path / "rerun"
    assert main(["sweep", "--from-manifest", str(out1 / "manifest.json"),
                 "--out", str(out2)]) == 0
    for name, blob in first.items():
        assert (out2 / name).read_bytes() == blob


def test_cli_sweep_partial_failure_exit_code(tmp_path):
    cfg = micro_config(tmp_path, sweep={"thresholds": [5.0, -2.0], "seeds": [0]})
    assert main(["sweep", "--config", str(cfg)]) == 2
    h, header, rows = read_csv(tmp_path / "out" / "sweep.csv")
    statuses = {r[2] for r in rows}
    assert statuses == {"ok", "failed"}


def test_cli_rejects_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"wat": 1}))
    assert main(["train", "--config", str(path)]) == 1


def test_cli_perf_roundtrip_with_mapping(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["map", "--config", str(cfg), "--strategy", "all-analog"]) == 0
    mapping_path = tmp_path / "out" / "mapping.json"
    out2 = tmp_path / "perf"
    assert main(["perf", "--config", str(cfg), "--mapping", str(mapping_path),
                 "--out", str(out2)]) == 0
    perf = json.loads((out2 / "perf.json").read_text())
    assert perf["mac_ratio"] == 1.0
    assert perf["speedup"] > 0


def test_cli_drift_study_outputs(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["drift-study", "--config", str(cfg)]) == 0
    h, header, rows = read_csv(tmp_path / "out" / "drift.csv")
    assert header == ["t_train", "t_eval", "mean_acc", "std_acc"]
    assert len(rows) == 2
    assert (tmp_path / "out" / "drift_train_1.dat").exists()


def test_cli_report_checks_hashes(tmp_path, capsys):
    cfg = micro_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert main(["report", str(out)]) == 0
    # corrupt one artifact's hash
    report_path = out / "train_report.json"
    obj = json.loads(report_path.read_text())
    obj["config_hash"] = "0" * 16
    report_path.write_text(json.dumps(obj))
    assert main(["report", str(out)]) == 1


def test_cli_set_override_reaches_nested_config(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["train", "--config", str(cfg),
                 "--set", "analog.sigma_out=0.05",
                 "--set", "analog.drift.nu_mean=0.08"]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["analog"]["sigma_out"] == 0.05
    assert manifest["config"]["analog"]["drift"]["nu_mean"] == 0.08
    # bad override paths are config errors
    assert main(["train", "--config", str(cfg), "--set", "noise=1"]) == 1


def test_cli_flag_overrides_change_hash(tmp_path):
    cfg = micro_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    h1 = json.loads((tmp_path / "out" / "manifest.json").read_text())["config_hash"]
    out2 = tmp_path / "o2"
    assert main(["train", "--config", str(cfg), "--sigma-w", "0.2",
                 "--out", str(out2)]) == 0
    h2 = json.loads((out2 / "manifest.json").read_text())["config_hash"]
    assert h1 != h2


def test_external_dataset_hook(tmp_path):
    data = generate_synthetic(tiny_spec())
    data_path = tmp_path / "data.bin"
    save_dataset(data_path, data, {"classes": 4, "input_shape": [1, 8, 8]})
    cfg = micro_config(
        tmp_path,
        dataset={"kind": "external", "path": str(data_path), "format_version": 1},
    )
    assert main(["train", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "train_report.json").read_text())
    assert report["val_accuracy"] > 50.0
