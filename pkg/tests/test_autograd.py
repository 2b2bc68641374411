import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birads_ssdl.autograd import (AdamState, Parameter, ShapeError, Tensor, activation, adam_step,
                                  conv2d, dense, dropout, flatten, maxpool2d, relu, softmax,
                                  tensor_sum, upsample2d, zero_grad)
from birads_ssdl.autograd.tensor import mul

from conftest import gradcheck, spaced_values


def conv_oracle(x, k, b):
    """Direct quadruple loop, zero same-padding, cross-correlation."""
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((n, o, h, w))
    for bi in range(n):
        for oc in range(o):
            for i in range(h):
                for j in range(w):
                    s = b[oc]
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                y, xx = i + di - ph, j + dj - pw
                                if 0 <= y < h and 0 <= xx < w:
                                    s += x[bi, ic, y, xx] * k[oc, ic, di, dj]
                    out[bi, oc, i, j] = s
    return out


def pool_oracle(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2))
    for bi in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[bi, ch, i, j] = max(x[bi, ch, 2 * i + a, 2 * j + b] for a in (0, 1) for b in (0, 1))
    return out


# ------------------------------------------------------------------ conv2d
def test_conv_1x1_kernel_doubles_input(rng):
    x = rng.normal(size=(2, 1, 5, 7))
    out = conv2d(Tensor(x), Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, 2 * x)


def test_conv_ones_kernel_counts_padded_window():
    out = conv2d(Tensor(np.ones((1, 1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
    o = out.data[0, 0]
    assert o[2, 2] == 9 and o[1, 1] == 9
    assert o[0, 0] == o[0, 4] == o[4, 0] == o[4, 4] == 4
    assert o[0, 2] == 6


def test_conv_matches_loop_oracle(rng):
    x = rng.normal(size=(2, 2, 8, 8))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = conv2d(Tensor(x), Tensor(k), Tensor(b))
    assert np.max(np.abs(out.data - conv_oracle(x, k, b))) < 1e-6


def test_conv_float32_matches_oracle(rng):
    x = rng.normal(size=(1, 2, 8, 8)).astype(np.float32)
    k = rng.normal(size=(4, 2, 3, 3)).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(k), Tensor(b))
    assert out.dtype == np.float32
    assert np.max(np.abs(out.data - conv_oracle(x, k, b))) < 1e-5


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)))


# ----------------------------------------------------------------- pooling
def test_maxpool_small():
    out = maxpool2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])))
    np.testing.assert_array_equal(out.data, [[[[4.0]]]])


def test_maxpool_constant_image():
    out = maxpool2d(Tensor(np.full((1, 2, 8, 8), 0.3)))
    np.testing.assert_array_equal(out.data, np.full((1, 2, 4, 4), 0.3))


def test_maxpool_matches_window_scan(rng):
    x = rng.normal(size=(2, 3, 16, 16))
    np.testing.assert_array_equal(maxpool2d(Tensor(x)).data, pool_oracle(x))


def test_maxpool_tie_gradient_goes_to_one_element():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    tensor_sum(maxpool2d(x)).backward()
    np.testing.assert_array_equal(x.grad, [[[[1.0, 0.0], [0.0, 0.0]]]])


def test_maxpool_odd_size_rejected():
    with pytest.raises(ShapeError):
        maxpool2d(Tensor(np.zeros((1, 1, 5, 4))))


def test_upsample_example():
    out = upsample2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2)
    expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    np.testing.assert_array_equal(out.data[0, 0], expected)


def test_upsample_factor_one_is_identity(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    np.testing.assert_array_equal(upsample2d(Tensor(x), 1).data, x)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_pool_inverts_upsample(n, c, h, w, seed):
    x = np.random.default_rng(seed).normal(size=(n, c, h, w))
    np.testing.assert_array_equal(maxpool2d(upsample2d(Tensor(x))).data, x)


# ------------------------------------------------------------------- dense
def test_dense_scalar_example():
    out = dense(Tensor(np.array([[3.0]])), Tensor(np.array([[2.0]])), Tensor(np.array([1.0])))
    np.testing.assert_array_equal(out.data, [[7.0]])


def test_dense_identity(rng):
    x = rng.normal(size=(4, 6))
    out = dense(Tensor(x), Tensor(np.eye(6)), Tensor(np.zeros(6)))
    np.testing.assert_array_equal(out.data, x)


def test_dense_matches_dot_loop(rng):
    x = rng.normal(size=(3, 64))
    w = rng.normal(size=(16, 64))
    b = rng.normal(size=16)
    expected = np.array([[sum(x[n, i] * w[j, i] for i in range(64)) + b[j] for j in range(16)]
                         for n in range(3)])
    assert np.max(np.abs(dense(Tensor(x), Tensor(w), Tensor(b)).data - expected)) < 1e-6


def test_dense_dimension_mismatch():
    with pytest.raises(ShapeError):
        dense(Tensor(np.zeros((2, 5))), Tensor(np.zeros((3, 4))), Tensor(np.zeros(3)))


# ------------------------------------------------------------- activations
def test_relu_example():
    np.testing.assert_array_equal(relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data, [0, 0, 2])


def test_softmax_symmetry_and_analytic():
    np.testing.assert_allclose(softmax(Tensor(np.array([[0.0, 0.0]]))).data, [[0.5, 0.5]])
    np.testing.assert_allclose(softmax(Tensor(np.array([[math.log(2), 0.0]]))).data, [[2 / 3, 1 / 3]],
                               rtol=1e-12)


def test_softmax_large_logits_stay_finite():
    out = softmax(Tensor(np.array([[1000.0, -1000.0]]))).data
    assert np.all(np.isfinite(out)) and out[0, 0] == 1.0


def test_linear_activation_and_unknown_kind(rng):
    x = rng.normal(size=(2, 3))
    np.testing.assert_array_equal(activation(Tensor(x), "linear").data, x)
    with pytest.raises(ValueError):
        activation(Tensor(x), "tanh")


# ----------------------------------------------------------------- dropout
def test_dropout_zero_probability_is_identity(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    assert dropout(x, 0.0, True, rng) is x
    assert dropout(x, 0.0, False, rng) is x


def test_dropout_eval_is_identity(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    np.testing.assert_array_equal(dropout(x, 0.5, False).data, x.data)


def test_dropout_preserves_expectation():
    out = dropout(Tensor(np.ones(100_000)), 0.5, True, np.random.default_rng(3)).data
    assert 0.98 <= out.mean() <= 1.02
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_rejects_p_one():
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(3)), 1.0, True, np.random.default_rng(0))


# ---------------------------------------------------------------- backward
def test_sum_gradient_is_ones(rng):
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    tensor_sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 5)))


def test_zero_times_x_has_zero_gradient(rng):
    x = Tensor(rng.normal(size=4), requires_grad=True)
    tensor_sum(x * 0.0).backward()
    np.testing.assert_array_equal(x.grad, np.zeros(4))


def test_backward_needs_scalar(rng):
    with pytest.raises(ValueError):
        Tensor(rng.normal(size=3), requires_grad=True).backward()


def test_unreachable_parameter_gradient_stays_zero(rng):
    a = Parameter(rng.normal(size=3), "a")
    b = Parameter(rng.normal(size=3), "b")
    zero_grad([a, b])
    tensor_sum(mul(a, a)).backward()
    assert np.any(a.grad != 0)
    np.testing.assert_array_equal(b.grad, np.zeros(3))


def test_gradients_accumulate_over_shared_use(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    tensor_sum(x * x + x).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_integer_input_becomes_float():
    t = Tensor(np.arange(4))
    assert t.dtype == np.float32
    assert t.grad is None


def _proj(out, r):
    return tensor_sum(out * Tensor(r))


GRAD_SHAPES = [(1, 1, 4, 4), (2, 1, 4, 4), (1, 2, 6, 4), (2, 3, 4, 6), (3, 2, 2, 2)]


@pytest.mark.parametrize("shape", GRAD_SHAPES)
def test_conv_gradient(shape, rng):
    out_ch = 2
    x = rng.normal(size=shape)
    k = rng.normal(size=(out_ch, shape[1], 3, 3))
    b = rng.normal(size=out_ch)
    r = rng.normal(size=(shape[0], out_ch) + shape[2:])
    assert gradcheck(lambda x_, k_, b_: _proj(conv2d(x_, k_, b_), r), [x, k, b]) < 1e-4


@pytest.mark.parametrize("shape", GRAD_SHAPES)
def test_maxpool_gradient(shape, rng):
    x = spaced_values(rng, shape)
    r = rng.normal(size=shape[:2] + (shape[2] // 2, shape[3] // 2))
    assert gradcheck(lambda x_: _proj(maxpool2d(x_), r), [x]) < 1e-4


@pytest.mark.parametrize("shape", GRAD_SHAPES)
def test_upsample_gradient(shape, rng):
    x = rng.normal(size=shape)
    r = rng.normal(size=shape[:2] + (shape[2] * 2, shape[3] * 2))
    assert gradcheck(lambda x_: _proj(upsample2d(x_), r), [x]) < 1e-4


@pytest.mark.parametrize("dims", [(1, 1, 1), (2, 3, 4), (5, 8, 2), (4, 16, 6), (3, 7, 7)])
def test_dense_gradient(dims, rng):
    n, d_in, d_out = dims
    x, w, b = rng.normal(size=(n, d_in)), rng.normal(size=(d_out, d_in)), rng.normal(size=d_out)
    r = rng.normal(size=(n, d_out))
    assert gradcheck(lambda x_, w_, b_: _proj(dense(x_, w_, b_), r), [x, w, b]) < 1e-4


@pytest.mark.parametrize("shape", [(3,), (2, 5), (4, 4), (1, 2, 3, 3), (6, 2)])
def test_relu_gradient(shape, rng):
    x = spaced_values(rng, shape, gap=0.05)
    r = rng.normal(size=shape)
    assert gradcheck(lambda x_: _proj(relu(x_), r), [x]) < 1e-4


@pytest.mark.parametrize("shape", [(1, 2), (3, 2), (5, 2), (2, 4), (4, 3)])
def test_softmax_gradient(shape, rng):
    x = rng.normal(size=shape)
    r = rng.normal(size=shape)
    assert gradcheck(lambda x_: _proj(softmax(x_), r), [x]) < 1e-4


@pytest.mark.parametrize("shape", [(3,), (2, 5), (4, 4), (1, 2, 3, 3), (6, 2)])
def test_dropout_gradient(shape, rng):
    x = rng.normal(size=shape)
    r = rng.normal(size=shape)
    seed = int(rng.integers(1 << 30))
    # fresh generator per call so every evaluation draws the same mask
    fn = lambda x_: _proj(dropout(x_, 0.3, True, np.random.default_rng(seed)), r)  # noqa: E731
    assert gradcheck(fn, [x]) < 1e-4


@pytest.mark.parametrize("shape", [(2, 1, 4, 4), (1, 3, 2, 2), (3, 2, 4, 2), (1, 1, 2, 2), (2, 2, 2, 4)])
def test_flatten_gradient(shape, rng):
    x = rng.normal(size=shape)
    r = rng.normal(size=(shape[0], int(np.prod(shape[1:]))))
    assert gradcheck(lambda x_: _proj(flatten(x_), r), [x]) < 1e-4


# -------------------------------------------------------------------- Adam
def test_adam_zero_gradient_leaves_parameters(rng):
    p = Parameter(rng.normal(size=(3, 3)), "w", dtype=np.float64)
    before = p.data.copy()
    state = AdamState()
    for _ in range(3):
        zero_grad([p])
        adam_step([p], state)
    np.testing.assert_array_equal(p.data, before)


def test_adam_missing_gradient_counts_as_zero(rng):
    p = Parameter(rng.normal(size=4), "w", dtype=np.float64)
    before = p.data.copy()
    adam_step([p], AdamState())
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_size():
    p = Parameter(np.array([0.5]), "w", dtype=np.float64)
    p.grad = np.array([1.0])
    adam_step([p], AdamState(lr=3e-4))
    assert abs((p.data[0] - 0.5) - (-3e-4 / (1 + 1e-8))) < 1e-9


def test_adam_matches_reference_loop(rng):
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    w0 = rng.normal(size=(2, 3))
    grads = [rng.normal(size=(2, 3)) for _ in range(5)]
    p = Parameter(w0.copy(), "w", dtype=np.float64)
    state = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps)
    for g in grads:
        p.grad = g
        adam_step([p], state)
    # reference: textbook bias-corrected Adam, scalar by scalar
    ref = w0.copy()
    for idx in np.ndindex(ref.shape):
        m = v = 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g[idx]
            v = b2 * v + (1 - b2) * g[idx] ** 2
            ref[idx] -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    assert np.max(np.abs(p.data - ref)) < 1e-10


def test_adam_keeps_float32_parameters():
    p = Parameter(np.ones(3, dtype=np.float32), "w")
    p.grad = np.ones(3, dtype=np.float32)
    adam_step([p], AdamState())
    assert p.data.dtype == np.float32
