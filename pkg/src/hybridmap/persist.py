"""On-disk formats: binary containers, manifests, CSV and plot-data files.

The container format is a one-line JSON header (schema version, metadata and
a buffer directory) followed by the raw buffer bytes, little-endian, in
directory order.  Float buffers are 32-bit reals, labels 32-bit ints; the
format is trivially parseable from any language.

Every artifact embeds the hash of the resolved run configuration, and each
command writes a ``manifest.json`` from which the run can be replayed
bit-identically.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

_DTYPES = {"float32": "<f4", "int32": "<i4"}


def write_container(path, buffers: list[tuple[str, np.ndarray]], meta: dict):
    """Write named arrays with a one-line JSON header."""
    directory = []
    encoded = []
    for name, arr in buffers:
        if np.issubdtype(arr.dtype, np.floating):
            dtype = "float32"
        elif np.issubdtype(arr.dtype, np.integer):
            dtype = "int32"
        else:
            raise ValueError(f"buffer {name!r}: unsupported dtype {arr.dtype}")
        encoded.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]))
        directory.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
    header = {"schema_version": SCHEMA_VERSION, "meta": meta, "buffers": directory}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for arr in encoded:
            fh.write(arr.tobytes())


def read_container(path):
    """Return ``(meta, {name: float64/int64 array})``."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported container schema in {path}")
        out = {}
        for rec in header["buffers"]:
            dtype = np.dtype(_DTYPES[rec["dtype"]])
            count = int(np.prod(rec["shape"])) if rec["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValueError(f"truncated buffer {rec['name']!r} in {path}")
            arr = np.frombuffer(raw, dtype=dtype).reshape(rec["shape"])
            out[rec["name"]] = arr.astype(
                np.float64 if rec["dtype"] == "float32" else np.int64
            )
    return header["meta"], out


# ---------------------------------------------------------------------------
# model weights


def save_model(path, model, meta: dict):
    buffers = []
    for layer in model.layers:
        buffers.append((f"w{layer.desc.id}", layer.weight.data))
        buffers.append((f"b{layer.desc.id}", layer.bias.data))
    write_container(path, buffers, meta)


def load_model_arrays(path):
    """Return ``(meta, {layer_id: (weights, bias)})``."""
    meta, buffers = read_container(path)
    params = {}
    for name, arr in buffers.items():
        kind, lid = name[0], int(name[1:])
        slot = params.setdefault(lid, [None, None])
        slot[0 if kind == "w" else 1] = arr
    return meta, {lid: tuple(pair) for lid, pair in params.items()}


def load_model_into(path, model):
    meta, params = load_model_arrays(path)
    for layer in model.layers:
        w, b = params[layer.desc.id]
        if tuple(w.shape) != layer.weight.data.shape:
            raise ValueError(
                f"layer {layer.desc.id}: stored weights {w.shape} do not match "
                f"{layer.weight.data.shape}"
            )
        layer.weight.data = np.array(w, dtype=np.float64)
        layer.bias.data = np.array(b, dtype=np.float64)
    return meta


# ---------------------------------------------------------------------------
# datasets


def save_dataset(path, data, meta: dict):
    write_container(
        path,
        [
            ("train_x", data.train_x), ("train_y", data.train_y),
            ("val_x", data.val_x), ("val_y", data.val_y),
            ("test_x", data.test_x), ("test_y", data.test_y),
        ],
        meta,
    )


def load_dataset(path):
    from .dataset import Dataset

    meta, buf = read_container(path)
    required = {"train_x", "train_y", "test_x", "test_y"}
    missing = required - set(buf)
    if missing:
        raise ValueError(f"dataset container missing buffers {sorted(missing)}")
    if "val_x" not in buf:  # carve validation from the train pool, 90/10
        n = buf["train_x"].shape[0]
        cut = (n * 9) // 10
        buf["val_x"], buf["val_y"] = buf["train_x"][cut:], buf["train_y"][cut:]
        buf["train_x"], buf["train_y"] = buf["train_x"][:cut], buf["train_y"][:cut]
    return meta, Dataset(
        train_x=buf["train_x"], train_y=buf["train_y"],
        val_x=buf["val_x"], val_y=buf["val_y"],
        test_x=buf["test_x"], test_y=buf["test_y"],
    )


# ---------------------------------------------------------------------------
# text artifacts


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: list[str], rows: list[list], config_hash: str):
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Return ``(config_hash, header, rows-as-strings)``."""
    lines = Path(path).read_text().splitlines()
    cfg_hash = ""
    body = []
    for line in lines:
        if line.startswith("# config_hash="):
            cfg_hash = line.split("=", 1)[1]
        elif line and not line.startswith("#"):
            body.append(line.split(","))
    if not body:
        raise ValueError(f"{path}: empty csv")
    return cfg_hash, body[0], body[1:]


def write_dat(path, columns: list[tuple], config_hash: str, comment: str = ""):
    """Gnuplot-style whitespace-separated columns."""
    lines = [f"# config_hash={config_hash}"]
    if comment:
        lines.append(f"# {comment}")
    for row in columns:
        lines.append(" ".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj: dict):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(outdir, command: str, config: dict, config_hash: str, outputs: list[str]):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config_hash,
        "config": config,
        "outputs": sorted(outputs),
    }
    path = os.path.join(outdir, "manifest.json")
    write_json(path, manifest)
    return path


def load_manifest(path):
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema in {path}")
    return manifest
