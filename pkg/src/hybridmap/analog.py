"""Noisy analog matrix products on tiled crossbars.

The simulated pipeline for one layer, with ``W`` the unfolded weight matrix:

1. per-output-channel scaling: ``W = alpha * U`` with ``|U| <= 1`` columnwise;
2. programming: multiplicative Gaussian weight noise ``U * (1 + sigma_w*xi)``
   plus a per-device drift exponent drawn once;
3. temporal drift: ``U(t) = U * (max(t, t_ref)/t_ref)**(-nu)`` elementwise;
4. the matrix product itself: inputs pass a clipping (optionally quantising)
   DAC and pick up additive input noise, each tile computes a partial product
   over an even split of the matrix rows, additive output noise and the ADC
   apply per tile, and partials are accumulated digitally;
5. digital rescale by ``alpha`` and a digital bias add.

During hardware-aware training the weight noise and drift attenuation are
resampled on every forward pass and gradients flow to the clean underlying
weights, treating noise factors and converter clipping as constants
(straight-through).  During evaluation the device is programmed once per
repetition and then read at the requested time.

Converter bounds use dynamic per-batch ranging: the clip bound is
``clip_sigma`` times the standard deviation of the values entering the
converter (``clip_sigma = inf`` disables clipping, ``levels = None`` means a
continuous converter).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import TileGeometry
from .tensor import Tensor, custom_node, mul_const, add_bias

EPS_SCALE = 1e-12


@dataclass(frozen=True)
class ConverterSpec:
    """DAC/ADC behaviour: dynamic clip bound (in batch sigmas) and resolution."""

    clip_sigma: float = 3.0
    levels: int | None = None  # None = continuous

    def __post_init__(self):
        if self.clip_sigma <= 0:
            raise ValueError("clip_sigma must be positive")
        if self.levels is not None and self.levels < 2:
            raise ValueError("levels must be >= 2 when discrete")


@dataclass(frozen=True)
class DriftModel:
    """Per-device conductance drift, power law in time.

    ``g(t) = g0 * (max(t, t_ref)/t_ref)**(-nu)`` with ``nu`` drawn per device
    from ``N(nu_mean, nu_std**2)`` clipped at zero.
    """

    kind: str = "power_law"  # or "none"
    nu_mean: float = 0.06
    nu_std: float = 0.02
    t_ref: float = 20.0

    def __post_init__(self):
        if self.kind not in ("none", "power_law"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.t_ref <= 0:
            raise ValueError("t_ref must be positive")

    def sample_exponents(self, shape, rng) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(shape)
        nu = self.nu_mean + self.nu_std * rng.standard_normal(shape)
        return np.maximum(nu, 0.0)

    def factor_at(self, nu: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("drift time must be >= 0")
        if self.kind == "none":
            return np.ones_like(nu)
        ratio = max(t, self.t_ref) / self.t_ref
        return ratio ** (-nu)


@dataclass(frozen=True)
class AnalogConfig:
    """All tile non-ideality parameters plus the evaluation time."""

    sigma_w: float = 0.08
    sigma_inp: float = 0.0
    sigma_out: float = 0.0
    dac: ConverterSpec = field(default_factory=ConverterSpec)
    adc: ConverterSpec = field(default_factory=ConverterSpec)
    tile: TileGeometry = field(default_factory=TileGeometry)
    t_eval: float = 86400.0
    drift: DriftModel = field(default_factory=DriftModel)
    compensate_drift: bool = False

    def __post_init__(self):
        for name in ("sigma_w", "sigma_inp", "sigma_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.t_eval < 0:
            raise ValueError("t_eval must be >= 0")


def ideal_config(base: AnalogConfig | None = None, t_eval: float = 0.0) -> AnalogConfig:
    """A noiseless config: no noise, unbounded continuous converters, no drift."""
    tile = base.tile if base is not None else TileGeometry()
    return AnalogConfig(
        sigma_w=0.0, sigma_inp=0.0, sigma_out=0.0,
        dac=ConverterSpec(clip_sigma=np.inf), adc=ConverterSpec(clip_sigma=np.inf),
        tile=tile, t_eval=t_eval, drift=DriftModel(kind="none"),
    )


# ---------------------------------------------------------------------------
# channel scaling and device programming


def scale_channels(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``W`` into unit weights and positive per-output-column scales.

    ``scales[j] = max(|W[:, j]|)`` floored at ``EPS_SCALE`` so all-zero
    columns stay well defined; ``unit * scales`` reconstructs ``W`` exactly.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("expected an unfolded 2-d weight matrix")
    scales = np.maximum(np.abs(w).max(axis=0), EPS_SCALE)
    return w / scales, scales


@dataclass
class AnalogLayerState:
    """One programmed tile stack: noisy unit weights plus digital metadata."""

    programmed: np.ndarray  # unit weights after programming noise
    channel_scales: np.ndarray
    digital_bias: np.ndarray
    drift_nu: np.ndarray
    program_time: float = 0.0


def program(weights: np.ndarray, bias: np.ndarray, cfg: AnalogConfig, rng) -> AnalogLayerState:
    """Write weights to devices: scale, apply programming noise, draw drift."""
    unit, scales = scale_channels(weights)
    if cfg.sigma_w > 0:
        unit = unit * (1.0 + cfg.sigma_w * rng.standard_normal(unit.shape))
    else:
        unit = unit.copy()
    nu = cfg.drift.sample_exponents(unit.shape, rng)
    return AnalogLayerState(
        programmed=unit,
        channel_scales=scales,
        digital_bias=np.array(bias, dtype=np.float64, copy=True),
        drift_nu=nu,
    )


def drift_to(state: AnalogLayerState, cfg: AnalogConfig, t: float) -> np.ndarray:
    """Unit weights as read at time ``t`` (seconds since programming)."""
    if t < 0:
        raise ValueError("drift time must be >= 0")
    factor = cfg.drift.factor_at(state.drift_nu, t)
    return state.programmed * factor


def _compensation(state: AnalogLayerState, drifted: np.ndarray) -> float:
    """Global scalar correction estimated from an all-ones probe vector."""
    probe = np.ones((1, state.programmed.shape[0]))
    y0 = np.abs(probe @ state.programmed).sum()
    yt = np.abs(probe @ drifted).sum()
    if yt <= 0 or y0 <= 0:
        return 1.0
    return yt / y0


# ---------------------------------------------------------------------------
# tiled forward core


def even_split(n: int, width: int) -> list[np.ndarray]:
    """Index ranges splitting ``n`` rows/cols evenly over ceil(n/width) tiles."""
    k = -(-n // width)
    return np.array_split(np.arange(n), k)


_STD_SAMPLE_CAP = 65536


def _batch_std(values: np.ndarray) -> float:
    """Std of the batch, estimated on an evenly strided subsample when the
    array is large (deterministic, keeps converter ranging cheap)."""
    flat = values.reshape(-1)
    if flat.size > _STD_SAMPLE_CAP:
        step = flat.size // _STD_SAMPLE_CAP + 1
        flat = flat[::step]
    return float(flat.std())


def _converter(values: np.ndarray, spec: ConverterSpec):
    """Apply dynamic-range clipping and optional uniform quantisation.

    Returns the converted values and the straight-through mask (ones inside
    the clip range, zeros outside).
    """
    if not np.isfinite(spec.clip_sigma):
        return values, None
    sd = _batch_std(values)
    if sd == 0.0:
        return values, None
    bound = spec.clip_sigma * sd
    mask = np.abs(values) <= bound
    out = np.clip(values, -bound, bound)
    if spec.levels is not None:
        step = 2.0 * bound / (spec.levels - 1)
        out = np.round((out + bound) / step) * step - bound
    return out, mask


def tiled_matmul(x: np.ndarray, w: np.ndarray, cfg: AnalogConfig, rng):
    """Noisy tiled product ``x @ w`` of DAC'd inputs with unit weights.

    ``x`` is ``(B, R)``, ``w`` is ``(R, C)``.  Rows are split evenly across
    row tiles whose partial outputs pass the ADC independently before being
    accumulated digitally; column tiles are independent output stripes.
    Returns ``(y, cache)`` where the cache carries what the backward pass
    needs (masks, slices, block ranges).
    """
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input to analog tile")
    xin, dac_mask = _converter(x, cfg.dac)
    row_blocks = even_split(w.shape[0], cfg.tile.rows)
    col_blocks = even_split(w.shape[1], cfg.tile.cols)
    single = len(row_blocks) == 1 and len(col_blocks) == 1
    y = None if single else np.zeros((x.shape[0], w.shape[1]))
    blocks = []
    for rb in row_blocks:
        for cb in col_blocks:
            xs = xin if single else xin[:, rb]
            if cfg.sigma_inp > 0:
                xs = xs + cfg.sigma_inp * rng.standard_normal(xs.shape)
            wb = w if single else w[np.ix_(rb, cb)]
            part = xs @ wb
            if cfg.sigma_out > 0:
                part = part + cfg.sigma_out * rng.standard_normal(part.shape)
            part, adc_mask = _converter(part, cfg.adc)
            if single:
                y = part
            else:
                y[:, cb] += part
            blocks.append((rb, cb, xs, adc_mask))
    cache = (blocks, dac_mask, x.shape, w, single)
    return y, cache


def tiled_matmul_backward(grad: np.ndarray, cache):
    """Gradients of :func:`tiled_matmul` w.r.t. ``x`` and ``w``.

    Noise draws are constants; converter clipping is straight-through (unit
    gradient inside the clip range, zero outside).
    """
    blocks, dac_mask, x_shape, w, single = cache
    if single:
        rb, cb, xs, adc_mask = blocks[0]
        gp = grad if adc_mask is None else grad * adc_mask
        gw = xs.T @ gp
        gx = gp @ w.T
    else:
        gx = np.zeros(x_shape)
        gw = np.zeros(w.shape)
        for rb, cb, xs, adc_mask in blocks:
            gp = grad[:, cb]
            if adc_mask is not None:
                gp = gp * adc_mask
            gw[np.ix_(rb, cb)] = xs.T @ gp
            gx[:, rb] += gp @ w[np.ix_(rb, cb)].T
    if dac_mask is not None:
        gx = gx * dac_mask
    return gx, gw


# ---------------------------------------------------------------------------
# layer-level forwards


def hwa_matmul(x: Tensor, weight: Tensor, bias: Tensor, cfg: AnalogConfig, rng, t: float) -> Tensor:
    """Training-mode analog product: fresh noise each call, gradients to the
    clean weights.

    Channel scales are recomputed from the current weights (so they track
    every optimiser step) and treated as constants in the backward pass.
    """
    unit_w, scales = scale_channels(weight.data)
    mult = np.ones_like(unit_w)
    if cfg.sigma_w > 0:
        mult = mult + cfg.sigma_w * rng.standard_normal(unit_w.shape)
    if cfg.drift.kind != "none" and t > cfg.drift.t_ref:
        nu = cfg.drift.sample_exponents(unit_w.shape, rng)
        mult = mult * cfg.drift.factor_at(nu, t)
    # clean weight -> noisy unit weight, as one constant elementwise factor
    noisy_unit = mul_const(weight, mult / scales)

    y_np, cache = tiled_matmul(x.data, noisy_unit.data, cfg, rng)

    def backward(g):
        gx, gw = tiled_matmul_backward(g, cache)
        if x.requires_grad:
            x._accumulate(gx)
        noisy_unit._accumulate(gw)

    pre = custom_node(y_np, (x, noisy_unit), backward)
    return add_bias(mul_const(pre, scales), bias)


def analog_forward(state: AnalogLayerState, x: np.ndarray, cfg: AnalogConfig, t: float, rng) -> np.ndarray:
    """Evaluation-mode analog product against a programmed layer state."""
    w_t = drift_to(state, cfg, t)
    y, _ = tiled_matmul(np.asarray(x, dtype=np.float64), w_t, cfg, rng)
    if cfg.compensate_drift:
        y = y / _compensation(state, w_t)
    return y * state.channel_scales + state.digital_bias
