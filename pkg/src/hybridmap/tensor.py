"""Dense float64 tensors with reverse-mode automatic differentiation.

A small tape-based engine: every operation records its parent tensors and a
closure that pushes gradients backwards.  It covers exactly what the training
loops need -- affine layers, convolution lowered to a matrix product through
``im2col``, ReLU, max pooling and softmax cross-entropy -- plus
:func:`custom_node` for operations with hand-written backward passes (the
tiled analog matrix product lives in :mod:`hybridmap.analog`).

Convolution activations use channels-last ``(B, H, W, C)`` layout so the
``im2col`` matrix product writes its output without a transpose.

Gradient buffers are not defensively copied; a backward closure may hand its
incoming gradient (or a view of it) to at most one parent, and must allocate
fresh arrays for the others.  All data is float64.  Non-finite values are an
error state: the loss op always checks, and setting the environment variable
``HYBRIDMAP_CHECK_FINITE=1`` makes every op validate its output (the test
suite does).
"""

from __future__ import annotations

import os

import numpy as np

_CHECK_FINITE = os.environ.get("HYBRIDMAP_CHECK_FINITE", "0") == "1"


class DivergenceError(FloatingPointError):
    """Raised when a forward pass or loss produces NaN/Inf."""


class GraphError(ValueError):
    """Raised when gradients are requested for a tensor outside the graph."""


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from this (scalar) tensor through the tape."""
        if self.data.shape != ():
            raise GraphError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.asarray(1.0)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def _node(data, parents, backward):
    """Build a graph node; skips bookkeeping when no parent needs gradients."""
    out = Tensor(data)
    if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise DivergenceError("non-finite values produced by an op")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def custom_node(data, parents, backward):
    """Public hook for ops with hand-written backward closures.

    ``backward(grad)`` must accumulate into each parent via
    ``parent._accumulate`` (see the module docstring for the aliasing rules).
    """
    return _node(data, parents, backward)


def gradients(loss: Tensor, params) -> list[np.ndarray]:
    """Run backward from ``loss`` and collect gradients for ``params``.

    Raises :class:`GraphError` if any parameter never took part in the
    forward pass that produced ``loss``.
    """
    loss.backward()
    out = []
    for p in params:
        if p.grad is None:
            raise GraphError(
                "parameter was never used in the forward pass; cannot differentiate"
            )
        out.append(p.grad)
    return out


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    y = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(y, (a, b), backward)


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Broadcast bias add over the trailing axis."""
    if bias.data.ndim != 1 or a.data.shape[-1] != bias.data.shape[0]:
        raise ValueError(f"bias shape mismatch: {a.data.shape} + {bias.data.shape}")
    y = a.data + bias.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _node(y, (a, bias), backward)


def mul_const(a: Tensor, c) -> Tensor:
    """Elementwise multiply by a constant array (no gradient into ``c``)."""
    c = np.asarray(c, dtype=np.float64)
    y = a.data * c

    def backward(g):
        a._accumulate(g * c)

    return _node(y, (a,), backward)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0.0))

    return _node(y, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    y = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _node(y, (a,), backward)


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    b = a.data.shape[0]
    return reshape(a, (b, -1))


# ---------------------------------------------------------------------------
# convolution support (activations are channels-last)


def _im2col_forward(x, kernel, stride, padding):
    b, h, w, c = x.shape
    k, s, p = kernel, stride, padding
    h_o = (h + 2 * p - k) // s + 1
    w_o = (w + 2 * p - k) // s + 1
    if h_o < 1 or w_o < 1:
        raise ValueError("kernel does not fit input")
    if p:
        xp = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
        xp[:, p : p + h, p : p + w, :] = x
    else:
        xp = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::s, ::s]  # (B, Ho, Wo, C, K, K)
    # row layout (c, kh, kw) matches the unfolded weight layout
    cols = windows.reshape(b * h_o * w_o, c * k * k)
    return np.ascontiguousarray(cols), h_o, w_o


def _col2im(gcols, x_shape, kernel, stride, padding, h_o, w_o):
    b, h, w, c = x_shape
    k, s, p = kernel, stride, padding
    gwin = gcols.reshape(b, h_o, w_o, c, k, k)
    gpad = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            gpad[:, kh : kh + s * h_o : s, kw : kw + s * w_o : s, :] += gwin[
                :, :, :, :, kh, kw
            ]
    if p:
        return gpad[:, p : p + h, p : p + w, :]
    return gpad


def im2col(a: Tensor, kernel: int, stride: int, padding: int):
    """Unfold ``(B, H, W, C)`` conv input into a ``(B*Ho*Wo, K*K*C)`` matrix.

    Returns ``(cols, h_o, w_o)``; convolution is then ``cols @ W_unfolded``
    with the unfolded ``(K*K*C, F)`` weight matrix.
    """
    cols, h_o, w_o = _im2col_forward(a.data, kernel, stride, padding)

    def backward(g):
        a._accumulate(_col2im(g, a.data.shape, kernel, stride, padding, h_o, w_o))

    return _node(cols, (a,), backward), h_o, w_o


def conv_layout(cols_out: Tensor, batch: int, filters: int, h_o: int, w_o: int) -> Tensor:
    """View ``(B*Ho*Wo, F)`` matmul output as ``(B, Ho, Wo, F)``."""
    return reshape(cols_out, (batch, h_o, w_o, filters))


def maxpool2d(a: Tensor, window: int) -> Tensor:
    """Channels-last max pooling with square window and equal stride."""
    b, h, w, c = a.data.shape
    m = window
    if h % m or w % m:
        raise ValueError(f"pool window {m} does not divide spatial dims {(h, w)}")
    hx, wx = h // m, w // m
    patches = a.data.reshape(b, hx, m, wx, m, c).transpose(0, 1, 3, 5, 2, 4)
    patches = np.ascontiguousarray(patches).reshape(b, hx, wx, c, m * m)
    idx = np.argmax(patches, axis=-1)
    y = np.take_along_axis(patches, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gp = np.zeros((b, hx, wx, c, m * m), dtype=np.float64)
        np.put_along_axis(gp, idx[..., None], g[..., None], axis=-1)
        gp = gp.reshape(b, hx, wx, c, m, m).transpose(0, 1, 4, 2, 5, 3)
        a._accumulate(gp.reshape(b, h, w, c))

    return _node(y, (a,), backward)


# ---------------------------------------------------------------------------
# loss


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over a batch of integer labels.

    Raises :class:`DivergenceError` on non-finite logits or loss; this is the
    canary used to detect diverged training.
    """
    z = logits.data
    if z.ndim != 2:
        raise ValueError("logits must be (batch, classes)")
    if not np.all(np.isfinite(z)):
        raise DivergenceError("non-finite logits")
    labels = np.asarray(labels)
    n = z.shape[0]
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    softmax = ez / ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    if not np.isfinite(loss):
        raise DivergenceError("non-finite loss")

    def backward(g):
        gz = softmax.copy()
        gz[np.arange(n), labels] -= 1.0
        gz *= g / n
        logits._accumulate(gz)

    return _node(np.asarray(loss), (logits,), backward)
