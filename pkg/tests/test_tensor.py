import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridmap import tensor as T
from hybridmap.model import Network, forward_digital
from hybridmap.network import LayerDescriptor, build_network
from hybridmap.rng import stream
from hybridmap.tensor import (
    DivergenceError,
    GraphError,
    Tensor,
    gradients,
    softmax_cross_entropy,
)


def central_diff(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def randomize_biases(model, seed):
    """Move biases off zero so no ReLU argument sits exactly on its kink
    (the loss is non-differentiable there and finite differences measure the
    two-sided average instead of the subgradient)."""
    rng = stream(seed, "bias-jitter")
    for layer in model.layers:
        layer.bias.data = 0.05 * rng.standard_normal(layer.bias.data.shape)


def test_gradients_match_finite_differences_on_small_net():
    net = build_network(
        [
            {"kind": "conv", "filters": 3, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 4, "kernel": 3, "stride": 2, "padding": 0},
            {"kind": "fc", "out_features": 5, "activation": "relu"},
            {"kind": "fc", "out_features": 3},
        ],
        (2, 8, 8),
        3,
    )
    model = Network.build(net, seed=5)
    randomize_biases(model, 5)
    rng = stream(1, "fd")
    x = rng.standard_normal((4, 2, 8, 8))
    y = np.array([0, 1, 2, 1])

    loss = softmax_cross_entropy(model.forward(x), y)
    grads = gradients(loss, model.parameters())

    def f():
        return float(softmax_cross_entropy(model.forward(x), y).data)

    for p, g in zip(model.parameters(), grads):
        fd = central_diff(f, p.data)
        assert rel_err(fd, g) < 1e-3


def test_cross_entropy_uniform_logits():
    k = 7
    logits = Tensor(np.zeros((1, k)), requires_grad=True)
    loss = softmax_cross_entropy(logits, np.array([2]))
    assert math.isclose(float(loss.data), math.log(k), rel_tol=1e-12)
    loss.backward()
    expected = np.full((1, k), 1.0 / k)
    expected[0, 2] -= 1.0
    np.testing.assert_allclose(logits.grad, expected, atol=1e-12)


@given(
    st.integers(min_value=1, max_value=6).flatmap(
        lambda k: st.tuples(
            st.just(k),
            st.lists(
                st.lists(st.floats(-30, 30), min_size=k, max_size=k),
                min_size=1,
                max_size=5,
            ),
        )
    )
)
def test_cross_entropy_nonnegative(case):
    k, rows = case
    z = np.array(rows)
    labels = np.zeros(z.shape[0], dtype=int)
    loss = softmax_cross_entropy(Tensor(z), labels)
    assert float(loss.data) >= -1e-12


def test_divergence_error_on_nonfinite_logits():
    logits = Tensor(np.array([[1.0, np.inf]]))
    with pytest.raises(DivergenceError):
        softmax_cross_entropy(logits, np.array([0]))


def test_backward_requires_scalar():
    t = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(GraphError):
        t.backward()


def test_unused_parameter_raises():
    w = Tensor(np.ones((2, 2)), requires_grad=True)
    unused = Tensor(np.ones(3), requires_grad=True)
    x = Tensor(np.ones((1, 2)))
    loss = softmax_cross_entropy(T.matmul(x, w), np.array([0]))
    with pytest.raises(GraphError):
        gradients(loss, [w, unused])


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def conv_loop_oracle(x, w_unfolded, desc):
    """Direct 6-nested-loop convolution; also counts multiplies."""
    b, c, h, wd = x.shape
    k, s, p = desc.kernel, desc.stride, desc.padding
    f = desc.filters
    h_o, w_o = desc.out_h, desc.out_w
    # unfolded rows are ordered (c, kh, kw)
    w4 = w_unfolded.reshape(c, k, k, f)
    xp = np.zeros((b, c, h + 2 * p, wd + 2 * p))
    xp[:, :, p : p + h, p : p + wd] = x
    out = np.zeros((b, f, h_o, w_o))
    mults = 0
    for bi in range(b):
        for fi in range(f):
            for oi in range(h_o):
                for oj in range(w_o):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(k):
                            for kj in range(k):
                                acc += (
                                    xp[bi, ci, oi * s + ki, oj * s + kj]
                                    * w4[ci, ki, kj, fi]
                                )
                                mults += 1
                    out[bi, fi, oi, oj] = acc
    return out, mults


def test_conv_forward_matches_loop_oracle():
    rng = stream(2, "convloop")
    desc = LayerDescriptor(
        id=0, kind="conv", in_channels=2, filters=3, kernel=3,
        stride=2, padding=1, out_h=4, out_w=4,
    )
    x = rng.standard_normal((2, 2, 7, 7))
    w = rng.standard_normal((18, 3))
    b = rng.standard_normal(3)
    got = forward_digital(desc, w, b, x)
    want, _ = conv_loop_oracle(x, w, desc)
    np.testing.assert_allclose(got, want + b[None, :, None, None], atol=1e-12)


def test_forward_digital_examples():
    fc = LayerDescriptor(id=0, kind="fc", in_features=3, out_features=3)
    np.testing.assert_allclose(
        forward_digital(fc, np.eye(3), np.zeros(3), np.array([1.0, 2.0, 3.0])),
        [[1.0, 2.0, 3.0]],
    )
    fc2 = LayerDescriptor(id=0, kind="fc", in_features=2, out_features=2)
    w = np.array([[1.0, 1.0], [1.0, -1.0]])
    np.testing.assert_allclose(
        forward_digital(fc2, w, np.array([0.0, 1.0]), np.array([2.0, 3.0])),
        [[5.0, 0.0]],
    )
    conv = LayerDescriptor(
        id=0, kind="conv", in_channels=1, filters=1, kernel=3,
        stride=1, padding=0, out_h=3, out_w=3,
    )
    out = forward_digital(conv, np.ones((9, 1)), np.zeros(1), np.ones((1, 1, 5, 5)))
    np.testing.assert_allclose(out, np.full((1, 1, 3, 3), 9.0))


def test_forward_digital_shape_errors():
    fc = LayerDescriptor(id=0, kind="fc", in_features=3, out_features=2)
    with pytest.raises(ValueError):
        forward_digital(fc, np.eye(3), np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        forward_digital(fc, np.ones((3, 2)), np.zeros(2), np.ones((1, 4)))


def test_maxpool_matches_bruteforce():
    rng = stream(3, "pool")
    x = rng.standard_normal((2, 4, 6, 3))
    t = Tensor(x, requires_grad=True)
    y = T.maxpool2d(t, 2)
    for b in range(2):
        for i in range(2):
            for j in range(3):
                for c in range(3):
                    window = x[b, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2, c]
                    assert y.data[b, i, j, c] == window.max()


def test_maxpool_backward_routes_to_argmax():
    x = np.zeros((1, 2, 2, 1))
    x[0, 1, 0, 0] = 5.0
    t = Tensor(x, requires_grad=True)
    y = T.maxpool2d(t, 2)
    loss = T.mul_const(T.reshape(y, ()), 1.0)
    loss.backward()
    expected = np.zeros((1, 2, 2, 1))
    expected[0, 1, 0, 0] = 1.0
    np.testing.assert_array_equal(t.grad, expected)
