"""Runtime network: parameters plus digital/analog forward passes.

Weights are stored in the shape the matrix product needs -- ``(M, N)`` for fc
layers and the unfolded ``(K*K*C, F)`` matrix for conv layers -- so the
digital and analog paths share one im2col code path and differ only in the
matrix-product kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .analog import AnalogConfig, AnalogLayerState, analog_forward, hwa_matmul, program
from .network import ANALOG, LayerDescriptor, MappingVector, NetworkDescriptor, unfolded_shape
from .rng import stream
from .tensor import Tensor


@dataclass
class Layer:
    desc: LayerDescriptor
    weight: Tensor
    bias: Tensor


class Network:
    """Trainable parameters bound to a :class:`NetworkDescriptor`."""

    def __init__(self, descriptor: NetworkDescriptor, layers: list[Layer]):
        self.descriptor = descriptor
        self.layers = layers

    @classmethod
    def build(cls, descriptor: NetworkDescriptor, seed: int) -> "Network":
        layers = []
        for desc in descriptor.layers:
            rows, cols = unfolded_shape(desc)
            rng = stream(seed, "init", desc.id)
            w = rng.standard_normal((rows, cols)) * np.sqrt(2.0 / rows)
            layers.append(
                Layer(
                    desc=desc,
                    weight=Tensor(w, requires_grad=True),
                    bias=Tensor(np.zeros(cols), requires_grad=True),
                )
            )
        return cls(descriptor, layers)

    def layer(self, lid: int) -> Layer:
        for l in self.layers:
            if l.desc.id == lid:
                return l
        raise KeyError(f"no layer with id {lid}")

    def parameters(self) -> list[Tensor]:
        out = []
        for l in self.layers:
            out.extend((l.weight, l.bias))
        return out

    def param_groups(self, mapping: MappingVector | None):
        """Split parameters into (digital, analog) groups for the optimisers."""
        digital, analog = [], []
        for l in self.layers:
            group = analog if mapping is not None and mapping.is_analog(l.desc.id) else digital
            group.extend((l.weight, l.bias))
        return digital, analog

    def snapshot(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        return {
            l.desc.id: (l.weight.data.copy(), l.bias.data.copy()) for l in self.layers
        }

    def restore(self, snap: dict[int, tuple[np.ndarray, np.ndarray]]):
        for l in self.layers:
            w, b = snap[l.desc.id]
            l.weight.data = w.copy()
            l.bias.data = b.copy()

    def copy(self) -> "Network":
        layers = [
            Layer(
                desc=l.desc,
                weight=Tensor(l.weight.data.copy(), requires_grad=True),
                bias=Tensor(l.bias.data.copy(), requires_grad=True),
            )
            for l in self.layers
        ]
        return Network(self.descriptor, layers)

    # -- forward passes ----------------------------------------------------

    def forward(
        self,
        x: np.ndarray,
        *,
        mapping: MappingVector | None = None,
        mode: str = "digital",
        analog_cfg: AnalogConfig | None = None,
        states: dict[int, AnalogLayerState] | None = None,
        rng=None,
        t: float = 0.0,
    ) -> Tensor:
        """Run the network, returning logits as a graph tensor.

        ``mode`` is ``"digital"`` (every layer exact), ``"train"`` (analog
        layers use the noisy hardware-aware path, differentiable) or
        ``"programmed"`` (analog layers read previously programmed states).
        """
        if mode not in ("digital", "train", "programmed"):
            raise ValueError(f"unknown mode {mode!r}")
        if not isinstance(x, Tensor):
            x = np.asarray(x, dtype=np.float64)
            if x.ndim == 4:  # dataset convention (B, C, H, W) -> channels-last
                x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
            x = Tensor(x)
        h = x
        for layer in self.layers:
            desc = layer.desc
            use_analog = (
                mode != "digital"
                and mapping is not None
                and mapping.domain(desc.id) == ANALOG
            )
            if desc.kind == "conv":
                cols, h_o, w_o = T.im2col(h, desc.kernel, desc.stride, desc.padding)
                z = self._product(cols, layer, use_analog, mode, analog_cfg, states, rng, t)
                z = T.conv_layout(z, h.shape[0], desc.filters, h_o, w_o)
            else:
                if h.data.ndim > 2:
                    h = T.flatten(h)
                z = self._product(h, layer, use_analog, mode, analog_cfg, states, rng, t)
            if desc.activation == "relu":
                z = T.relu(z)
            if desc.pool:
                z = T.maxpool2d(z, desc.pool)
            h = z
        return h

    def _product(self, x, layer, use_analog, mode, cfg, states, rng, t):
        if not use_analog:
            return T.add_bias(T.matmul(x, layer.weight), layer.bias)
        if cfg is None:
            raise ValueError("analog layers need an AnalogConfig")
        if mode == "train":
            return hwa_matmul(x, layer.weight, layer.bias, cfg, rng, t)
        state = states[layer.desc.id]
        y = analog_forward(state, x.data, cfg, t, rng)
        return Tensor(y)

    # -- programming ---------------------------------------------------------

    def program_layers(self, mapping: MappingVector, cfg: AnalogConfig, rng):
        """Program every analog-mapped layer; one rng stream per call."""
        states = {}
        for lid in sorted(mapping.analog):
            layer = self.layer(lid)
            states[lid] = program(layer.weight.data, layer.bias.data, cfg, rng)
        return states


def forward_digital(desc: LayerDescriptor, weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reference exact affine map for one layer (conv via im2col)."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    rows, cols = unfolded_shape(desc)
    if w.shape != (rows, cols):
        raise ValueError(f"weight shape {w.shape} does not match unfolded {(rows, cols)}")
    if b.shape != (cols,):
        raise ValueError(f"bias shape {b.shape} does not match {cols} outputs")
    x = np.asarray(x, dtype=np.float64)
    if desc.kind == "fc":
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != desc.in_features:
            raise ValueError(f"input width {x.shape[1]} != {desc.in_features}")
        return x @ w + b
    if x.ndim == 3:
        x = x[None]
    # accepts the (B, C, H, W) convention; internal layout is channels-last
    nhwc = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    cols_np, h_o, w_o = T._im2col_forward(nhwc, desc.kernel, desc.stride, desc.padding)
    y = cols_np @ w + b
    batch = x.shape[0]
    return y.reshape(batch, h_o, w_o, desc.filters).transpose(0, 3, 1, 2)
