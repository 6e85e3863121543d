"""Layer/network descriptors and the MAC and tiling arithmetic built on them.

Descriptors are frozen dataclasses; every derived quantity (MAC counts,
unfolded matrix shapes, tile counts, the analog MAC ratio of a mapping) is a
pure function of them, so layer rankings are stable across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

DIGITAL = "digital"
ANALOG = "analog"


@dataclass(frozen=True)
class TileGeometry:
    """Crossbar tile extents; large unfolded matrices split across tiles."""

    rows: int = 256
    cols: int = 256

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("tile extents must be >= 1")


@dataclass(frozen=True)
class LayerDescriptor:
    """Shape and kind of one mappable layer.

    ``kind`` is ``"fc"`` (``in_features`` x ``out_features``) or ``"conv"``
    (``in_channels``, ``filters``, square ``kernel``, ``stride``/``padding``
    and the output spatial extents).  ``activation``/``pool`` are per-layer
    annotations; ``always_digital`` marks layers excluded from analog mapping
    (e.g. stand-ins for dynamic-weight attention products) and ``low_reuse``
    marks depthwise-style layers with poor cache locality for the
    performance model.
    """

    id: int
    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    filters: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    out_h: int = 0
    out_w: int = 0
    always_digital: bool = False
    low_reuse: bool = False
    activation: str = "relu"
    pool: int = 0

    def __post_init__(self):
        if self.kind == "fc":
            if self.in_features < 1 or self.out_features < 1:
                raise ValueError(f"layer {self.id}: fc features must be >= 1")
        elif self.kind == "conv":
            for name in ("in_channels", "filters", "kernel", "stride", "out_h", "out_w"):
                if getattr(self, name) < 1:
                    raise ValueError(f"layer {self.id}: conv {name} must be >= 1")
            if self.padding < 0:
                raise ValueError(f"layer {self.id}: padding must be >= 0")
        else:
            raise ValueError(f"layer {self.id}: unknown kind {self.kind!r}")
        if self.activation not in ("relu", "none"):
            raise ValueError(f"layer {self.id}: unknown activation {self.activation!r}")


def count_macs(layer: LayerDescriptor) -> int:
    """Multiply count of the layer; biases are digital and excluded."""
    if layer.kind == "fc":
        return layer.in_features * layer.out_features
    return (
        layer.out_w
        * layer.out_h
        * layer.in_channels
        * layer.kernel**2
        * layer.filters
    )


def unfolded_shape(layer: LayerDescriptor) -> tuple[int, int]:
    """Shape of the weight matrix once lowered to a single matrix product."""
    if layer.kind == "fc":
        return (layer.in_features, layer.out_features)
    return (layer.kernel**2 * layer.in_channels, layer.filters)


def tile_count(shape: tuple[int, int], geom: TileGeometry) -> int:
    rows, cols = shape
    if rows < 1 or cols < 1:
        raise ValueError("shape extents must be >= 1")
    return math.ceil(rows / geom.rows) * math.ceil(cols / geom.cols)


@dataclass(frozen=True)
class NetworkDescriptor:
    """Ordered layer descriptors plus the input shape and class count."""

    layers: tuple[LayerDescriptor, ...]
    input_shape: tuple[int, int, int]  # (C, H, W)
    classes: int

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if not any(not l.always_digital for l in self.layers):
            raise ValueError("network has no mappable layer")
        _check_shapes(self)

    @property
    def mappable_ids(self) -> tuple[int, ...]:
        return tuple(l.id for l in self.layers if not l.always_digital)

    def layer(self, lid: int) -> LayerDescriptor:
        for l in self.layers:
            if l.id == lid:
                return l
        raise KeyError(f"no layer with id {lid}")

    def total_macs(self) -> int:
        return sum(count_macs(l) for l in self.layers)


def _check_shapes(net: NetworkDescriptor):
    c, h, w = net.input_shape
    flat = None
    for l in net.layers:
        if l.kind == "conv":
            if flat is not None:
                raise ValueError(f"layer {l.id}: conv after fc is not supported")
            if l.in_channels != c:
                raise ValueError(
                    f"layer {l.id}: expects {l.in_channels} channels, gets {c}"
                )
            h_o = (h + 2 * l.padding - l.kernel) // l.stride + 1
            w_o = (w + 2 * l.padding - l.kernel) // l.stride + 1
            if (h_o, w_o) != (l.out_h, l.out_w):
                raise ValueError(
                    f"layer {l.id}: descriptor says output {(l.out_h, l.out_w)}, "
                    f"shape math gives {(h_o, w_o)}"
                )
            c, h, w = l.filters, h_o, w_o
            if l.pool:
                if h % l.pool or w % l.pool:
                    raise ValueError(f"layer {l.id}: pool does not divide {(h, w)}")
                h, w = h // l.pool, w // l.pool
        else:
            if flat is None:
                flat = c * h * w
            if l.in_features != flat:
                raise ValueError(
                    f"layer {l.id}: expects {l.in_features} inputs, gets {flat}"
                )
            flat = l.out_features
    last = net.layers[-1]
    out = last.out_features if last.kind == "fc" else None
    if out is not None and out != net.classes:
        raise ValueError(f"last layer emits {out} features for {net.classes} classes")


def build_network(layer_specs: list[dict], input_shape, classes: int) -> NetworkDescriptor:
    """Construct a descriptor from compact per-layer specs.

    Derived extents (conv output size, fc input width) are filled in from the
    running activation shape, so specs only carry what a config author knows.
    """
    c, h, w = input_shape
    layers = []
    flat = None
    for i, spec in enumerate(layer_specs):
        spec = dict(spec)
        kind = spec.pop("kind")
        common = {
            "always_digital": spec.pop("always_digital", False),
            "low_reuse": spec.pop("low_reuse", False),
            "activation": spec.pop("activation", "none" if i == len(layer_specs) - 1 else "relu"),
        }
        if kind == "conv":
            k = spec.pop("kernel")
            s = spec.pop("stride", 1)
            p = spec.pop("padding", 0)
            f = spec.pop("filters")
            pool = spec.pop("pool", 0)
            if spec:
                raise ValueError(f"layer {i}: unknown keys {sorted(spec)}")
            h_o = (h + 2 * p - k) // s + 1
            w_o = (w + 2 * p - k) // s + 1
            layers.append(
                LayerDescriptor(
                    id=i, kind="conv", in_channels=c, filters=f, kernel=k,
                    stride=s, padding=p, out_h=h_o, out_w=w_o, pool=pool, **common,
                )
            )
            c, h, w = f, h_o, w_o
            if pool:
                h, w = h // pool, w // pool
        elif kind == "fc":
            n = spec.pop("out_features")
            if spec:
                raise ValueError(f"layer {i}: unknown keys {sorted(spec)}")
            m = flat if flat is not None else c * h * w
            layers.append(
                LayerDescriptor(id=i, kind="fc", in_features=m, out_features=n, **common)
            )
            flat = n
        else:
            raise ValueError(f"layer {i}: unknown kind {kind!r}")
    return NetworkDescriptor(tuple(layers), tuple(input_shape), classes)


# ---------------------------------------------------------------------------
# mapping vectors


@dataclass(frozen=True)
class MappingVector:
    """Per-layer digital/analog assignment over a network's mappable layers."""

    mappable: tuple[int, ...]
    analog: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.analog <= set(self.mappable):
            raise ValueError("analog set contains non-mappable layer ids")

    @classmethod
    def all_digital(cls, net: NetworkDescriptor) -> "MappingVector":
        return cls(net.mappable_ids, frozenset())

    @classmethod
    def all_analog(cls, net: NetworkDescriptor) -> "MappingVector":
        return cls(net.mappable_ids, frozenset(net.mappable_ids))

    def domain(self, lid: int) -> str:
        return ANALOG if lid in self.analog else DIGITAL

    def is_analog(self, lid: int) -> bool:
        return lid in self.analog

    def with_domain(self, lid: int, domain: str) -> "MappingVector":
        if lid not in self.mappable:
            raise ValueError(f"layer {lid} is not mappable")
        analog = set(self.analog)
        if domain == ANALOG:
            analog.add(lid)
        else:
            analog.discard(lid)
        return replace(self, analog=frozenset(analog))

    def to_json(self) -> dict:
        return {str(lid): self.domain(lid) for lid in self.mappable}

    @classmethod
    def from_json(cls, obj: dict, net: NetworkDescriptor) -> "MappingVector":
        mappable = net.mappable_ids
        analog = frozenset(int(k) for k, v in obj.items() if v == ANALOG)
        return cls(mappable, analog)


def mac_ratio(net: NetworkDescriptor, mapping: MappingVector) -> float:
    """Fraction of mappable-layer MACs assigned to analog tiles."""
    total = sum(count_macs(net.layer(lid)) for lid in mapping.mappable)
    analog = sum(count_macs(net.layer(lid)) for lid in mapping.analog)
    return analog / total


# ---------------------------------------------------------------------------
# descriptor file format


def descriptor_to_json(net: NetworkDescriptor) -> dict:
    layers = []
    for l in net.layers:
        if l.kind == "conv":
            rec = {
                "kind": "conv", "filters": l.filters, "kernel": l.kernel,
                "stride": l.stride, "padding": l.padding,
            }
            if l.pool:
                rec["pool"] = l.pool
        else:
            rec = {"kind": "fc", "out_features": l.out_features}
        rec["activation"] = l.activation
        if l.always_digital:
            rec["always_digital"] = True
        if l.low_reuse:
            rec["low_reuse"] = True
        layers.append(rec)
    return {
        "input_shape": list(net.input_shape),
        "classes": net.classes,
        "layers": layers,
    }


def descriptor_from_json(obj: dict) -> NetworkDescriptor:
    unknown = set(obj) - {"input_shape", "classes", "layers"}
    if unknown:
        raise ValueError(f"unknown network keys {sorted(unknown)}")
    return build_network(obj["layers"], tuple(obj["input_shape"]), obj["classes"])


def load_descriptor(path) -> NetworkDescriptor:
    with open(path) as fh:
        return descriptor_from_json(json.load(fh))


def save_descriptor(net: NetworkDescriptor, path):
    with open(path, "w") as fh:
        json.dump(descriptor_to_json(net), fh, indent=2)
        fh.write("\n")
