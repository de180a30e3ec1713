import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqsplit import autodiff as ad


def _grad(fn, theta):
    tape = ad.Tape()
    out = fn(tape.parameters(theta))
    return ad.backward(tape, out)


def _num(fn, theta):
    def scalar(t):
        tape = ad.Tape()
        return float(fn(tape.parameters(t)).value)

    return ad.numerical_gradient(scalar, theta)


def test_sum_squares_by_hand():
    np.testing.assert_array_equal(_grad(ad.sum_squares, np.array([1.0, -2.0])), [2.0, -4.0])


def test_reused_node_accumulates():
    # d/dx (x * x + x) = 2x + 1
    g = _grad(lambda x: ad.sum_(x * x + x), np.array([3.0, -1.0]))
    np.testing.assert_array_equal(g, [7.0, -1.0])


def test_broadcast_gradients_are_reduced():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((4, 3))

    def fn(b):
        return ad.sum_squares(ad.add(M, b))

    b = rng.standard_normal(3)
    np.testing.assert_allclose(_grad(fn, b), 2 * (M + b).sum(axis=0), atol=1e-12)


def test_matmul_gradient_closed_form():
    rng = np.random.default_rng(1)
    X, Y = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))
    w = rng.standard_normal(12)
    g = _grad(lambda t: ad.sum_squares(ad.matmul(X, ad.reshape(t, (4, 3))) - Y), w)
    W = w.reshape(4, 3)
    np.testing.assert_allclose(g, (2 * X.T @ (X @ W - Y)).ravel(), atol=1e-12)


def test_constants_do_not_get_gradients():
    tape = ad.Tape()
    theta = tape.parameters(np.ones(2))
    c = ad.constant(tape, np.array([5.0, 6.0]))
    out = ad.sum_(ad.mul(theta, c))
    gt, gc = ad.gradients(tape, out, [theta, c])
    np.testing.assert_array_equal(gt, [5.0, 6.0])
    np.testing.assert_array_equal(gc, [1.0, 1.0])
    assert ad.backward(tape, out).tolist() == [5.0, 6.0]


def test_unused_parameters_get_zero_gradient():
    tape = ad.Tape()
    theta = tape.parameters(np.ones(3))
    other = tape.leaf(np.ones(2))
    np.testing.assert_array_equal(ad.backward(tape, ad.sum_(other)), np.zeros(3))


def test_backward_errors():
    tape = ad.Tape()
    theta = tape.parameters(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(tape, theta)
    with pytest.raises(RuntimeError):
        tape.parameters(np.ones(1))
    with pytest.raises(ValueError):
        ad.backward(ad.Tape(), ad.sum_(theta))
    with pytest.raises(ValueError):
        ad.pointwise(theta, "gelu")


def test_plain_arrays_pass_through():
    out = ad.matmul(np.eye(2), np.ones(2))
    assert isinstance(out, np.ndarray)
    tape = ad.Tape()
    assert ad.backward(tape, ad.sum_(tape.leaf(np.ones(2)))).size == 0


def _direct_conv(x, k):
    b, c, h, w = x.shape
    o, _, kh, kw = k.shape
    out = np.zeros((b, o, h, w))
    for i in range(h):
        for j in range(w):
            for di in range(kh):
                for dj in range(kw):
                    patch = x[:, :, (i + di - kh // 2) % h, (j + dj - kw // 2) % w]
                    out[:, :, i, j] += patch @ k[:, :, di, dj].T
    return out


@pytest.mark.parametrize("shape,kernel", [((5, 6), 3), ((4, 4), 5), ((1, 8), 3), ((3, 3), 1)])
def test_circular_conv_matches_direct_sum(shape, kernel):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, *shape))
    k = rng.standard_normal((4, 3, kernel, kernel))
    if shape[0] == 1:
        k = k[:, :, kernel // 2:kernel // 2 + 1, :]
    np.testing.assert_allclose(ad.circular_conv2d(x, k), _direct_conv(x, k), atol=1e-12)


def test_circular_conv_commutes_with_cyclic_shift():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 6, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    shifted = np.roll(x, (2, -1), axis=(2, 3))
    np.testing.assert_allclose(ad.circular_conv2d(shifted, k), np.roll(ad.circular_conv2d(x, k), (2, -1), axis=(2, 3)),
                               atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ValueError):
        ad.circular_conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_conv_gradients():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 2, 5, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    target = rng.standard_normal((2, 3, 5, 4))
    n_k = w.size

    def fn(t):
        xx = ad.reshape(t[n_k:], x.shape)
        return ad.sum_squares(ad.circular_conv2d(xx, ad.reshape(t[:n_k], w.shape)) - target)

    theta = np.concatenate([w.ravel(), x.ravel()])
    np.testing.assert_allclose(_grad(fn, theta), _num(fn, theta), rtol=1e-6, atol=1e-6)


PRIMITIVES = {
    "neg": lambda t: ad.sum_(ad.mul(ad.neg(t), np.arange(6.0))),
    "mul": lambda t: ad.sum_(ad.mul(t, t[::-1])),
    "matmul": lambda t: ad.sum_squares(ad.matmul(ad.reshape(t, (2, 3)), ad.transpose(ad.reshape(t, (2, 3))))),
    "mean": lambda t: ad.mean(ad.mul(t, t), axis=0),
    "sum_axis": lambda t: ad.sum_squares(ad.sum_(ad.reshape(t, (3, 2)), axis=1)),
    "getitem": lambda t: ad.sum_squares(ad.reshape(t, (2, 3))[:, 1:]),
    "take": lambda t: ad.sum_squares(ad.mul(ad.take(ad.reshape(t, (2, 3)), [2, 0, 2], axis=-1), 3.0)),
    "embed": lambda t: ad.sum_squares(ad.add(ad.embed(ad.reshape(t, (2, 3)), [4, 0, 2], 5), np.arange(5.0))),
    "concatenate": lambda t: ad.sum_squares(ad.mul(ad.concatenate([t, ad.mul(t, 2.0)]), np.arange(12.0))),
    "stack": lambda t: ad.sum_squares(ad.mul(ad.stack([t, ad.tanh(t)], axis=1), np.arange(2.0))),
    "relu": lambda t: ad.sum_squares(ad.relu(t)),
    "tanh": lambda t: ad.sum_(ad.tanh(ad.mul(t, t))),
    "softplus": lambda t: ad.sum_squares(ad.pointwise(t, "softplus")),
    "identity": lambda t: ad.sum_squares(ad.pointwise(t, "identity")),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_primitive_gradients_match_central_differences(name, seed):
    theta = np.random.default_rng(seed).standard_normal(6)
    if name == "relu":
        theta = np.where(np.abs(theta) < 1e-3, 0.5, theta)  # keep away from the kink
    fn = PRIMITIVES[name]
    np.testing.assert_allclose(_grad(fn, theta), _num(fn, theta), rtol=1e-6, atol=1e-8)


def test_numerical_gradient_of_quadratic():
    np.testing.assert_allclose(ad.numerical_gradient(lambda t: float(t @ t), np.array([1.0, 2.0])), [2.0, 4.0],
                               atol=1e-8)
