"""Analytical latency and energy estimator for hybrid mappings.

A roofline-style model, not cycle simulation.  Per layer and domain the MVM
path latency is the max of a compute term and a memory term:

* digital: ``2*MACs / (cpu_peak * cpu_effective_fraction)`` vs. DRAM traffic
  ``(inputs/reuse + weights + outputs) * bytes_per_element / dram_bw``.  The
  cache-reuse divisor models convolution input locality; depthwise-style
  layers (``low_reuse``) get reuse 1.
* analog: one crossbar invocation per output position (``100 ns`` each, all
  tiles of the layer fire in parallel) vs. streaming the im2col'd inputs and
  outputs over the tile link; weights live in the crossbars and move no
  bytes.  Partial sums across row tiles are accumulated by the CPU at scalar
  rate.

On top of the MVM path, :func:`estimate` charges every layer a fixed
always-digital handling cost (im2col packing and activation/pooling/requant
work at CPU scalar rate); without it the analog MVM time of a whole network
rounds to zero and speedups diverge, where measured systems are bounded by
the non-MVM fraction of the workload.

Energy integrates ops over each path's efficiency plus static power times
total latency; static power dominates this class of system, which is what
makes energy gains track speedups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .network import (
    ANALOG,
    DIGITAL,
    LayerDescriptor,
    MappingVector,
    NetworkDescriptor,
    TileGeometry,
    count_macs,
    unfolded_shape,
)


@dataclass(frozen=True)
class SystemParams:
    """Architectural constants; defaults model a 2.3 GHz in-order edge CPU
    with tightly coupled 256x256 analog tiles and INT8 deployment."""

    cpu_peak_ops_per_s: float = 73.6e9  # 32 INT8 SIMD ops/cycle at 2.3 GHz
    cpu_effective_fraction: float = 0.35
    cpu_scalar_ops_per_s: float = 2.3e9
    aimc_tile_latency: float = 100e-9
    aimc_transfer_bandwidth: float = 4e9
    aimc_effective_fraction: float = 0.57
    aimc_energy_eff: float = 20e12  # Op/s/W
    digital_energy_eff: float = 22.8e9  # Op/s/W
    dram_bandwidth: float = 19.2e9  # 2400 MT/s DDR4 x 8 bytes
    bytes_per_element: float = 1.0  # INT8
    cache_reuse: float = 8.0
    pack_ops_per_element: float = 4.0
    post_ops_per_element: float = 4.0
    static_power_w: float = 4.0
    tile: TileGeometry = field(default_factory=TileGeometry)

    def __post_init__(self):
        for name in (
            "cpu_peak_ops_per_s", "cpu_scalar_ops_per_s", "aimc_tile_latency",
            "aimc_transfer_bandwidth", "aimc_energy_eff", "digital_energy_eff",
            "dram_bandwidth", "bytes_per_element", "cache_reuse",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("cpu_effective_fraction", "aimc_effective_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1]")


def _geometry(layer: LayerDescriptor):
    """(macs, positions, in_elems, out_elems, weight_elems, unfolded_rows)."""
    macs = count_macs(layer)
    rows, cols = unfolded_shape(layer)
    if layer.kind == "conv":
        positions = layer.out_h * layer.out_w
        in_elems = positions * rows  # im2col volume
        out_elems = positions * cols
    else:
        positions = 1
        in_elems = rows
        out_elems = cols
    return macs, positions, in_elems, out_elems, rows * cols, rows


def layer_latency(layer: LayerDescriptor, domain: str, params: SystemParams) -> float:
    """MVM-path latency of one layer in seconds for the given domain."""
    macs, positions, in_elems, out_elems, weight_elems, rows = _geometry(layer)
    if macs == 0:
        return 0.0
    bpe = params.bytes_per_element
    if domain == DIGITAL:
        compute = 2.0 * macs / (params.cpu_peak_ops_per_s * params.cpu_effective_fraction)
        # kernel-footprint reuse only exists for convolutions
        reuse = params.cache_reuse if layer.kind == "conv" and not layer.low_reuse else 1.0
        mem_bytes = (in_elems / reuse + weight_elems + out_elems) * bpe
        return max(compute, mem_bytes / params.dram_bandwidth)
    if domain == ANALOG:
        mvm = positions * params.aimc_tile_latency
        io_bytes = (in_elems + out_elems) * bpe
        io = io_bytes / (params.aimc_transfer_bandwidth * params.aimc_effective_fraction)
        row_tiles = math.ceil(rows / params.tile.rows)
        accum = (row_tiles - 1) * out_elems / params.cpu_scalar_ops_per_s
        return max(mvm, io) + accum
    raise ValueError(f"unknown domain {domain!r}")


def aux_latency(layer: LayerDescriptor, params: SystemParams) -> float:
    """Always-digital per-layer handling: im2col packing plus activation work."""
    _, _, in_elems, out_elems, _, _ = _geometry(layer)
    ops = params.pack_ops_per_element * in_elems + params.post_ops_per_element * out_elems
    return ops / params.cpu_scalar_ops_per_s


@dataclass(frozen=True)
class LayerPerf:
    layer_id: int
    domain: str
    mvm_latency: float
    aux_latency: float
    dynamic_energy: float

    @property
    def latency(self) -> float:
        return self.mvm_latency + self.aux_latency


@dataclass(frozen=True)
class PerfReport:
    per_layer: tuple[LayerPerf, ...]
    total_latency: float
    total_energy: float
    speedup: float
    energy_gain: float

    def to_json(self) -> dict:
        return {
            "total_latency_s": self.total_latency,
            "total_energy_j": self.total_energy,
            "speedup": self.speedup,
            "energy_gain": self.energy_gain,
            "per_layer": [
                {
                    "layer_id": lp.layer_id,
                    "domain": lp.domain,
                    "mvm_latency_s": lp.mvm_latency,
                    "aux_latency_s": lp.aux_latency,
                    "dynamic_energy_j": lp.dynamic_energy,
                }
                for lp in self.per_layer
            ],
        }


def _layer_perf(layer: LayerDescriptor, domain: str, params: SystemParams) -> LayerPerf:
    macs, positions, in_elems, out_elems, _, rows = _geometry(layer)
    mvm = layer_latency(layer, domain, params)
    aux = aux_latency(layer, params)
    aux_ops = params.pack_ops_per_element * in_elems + params.post_ops_per_element * out_elems
    if domain == ANALOG:
        row_tiles = math.ceil(rows / params.tile.rows)
        accum_ops = (row_tiles - 1) * out_elems
        dyn = 2.0 * macs / params.aimc_energy_eff + (aux_ops + accum_ops) / params.digital_energy_eff
    else:
        dyn = (2.0 * macs + aux_ops) / params.digital_energy_eff
    return LayerPerf(layer.id, domain, mvm, aux, dyn)


def _totals(net: NetworkDescriptor, mapping: MappingVector, params: SystemParams):
    per_layer = []
    for layer in net.layers:
        domain = mapping.domain(layer.id) if layer.id in mapping.mappable else DIGITAL
        per_layer.append(_layer_perf(layer, domain, params))
    latency = sum(lp.latency for lp in per_layer)
    energy = sum(lp.dynamic_energy for lp in per_layer) + params.static_power_w * latency
    return per_layer, latency, energy


def estimate(net: NetworkDescriptor, mapping: MappingVector, params: SystemParams) -> PerfReport:
    """Latency/energy of a mapping, normalised against all-digital execution."""
    per_layer, latency, energy = _totals(net, mapping, params)
    _, base_latency, base_energy = _totals(net, MappingVector.all_digital(net), params)
    return PerfReport(
        per_layer=tuple(per_layer),
        total_latency=latency,
        total_energy=energy,
        speedup=base_latency / latency,
        energy_gain=base_energy / energy,
    )
