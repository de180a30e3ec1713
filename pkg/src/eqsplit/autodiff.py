"""A small tape-based reverse-mode differentiation engine over numpy arrays.

A fresh :class:`Tape` is built for every loss evaluation.  Each primitive
appends one node holding its value, its parent node indices and a closure
mapping the output cotangent to parent cotangents.

>>> tape = Tape()
>>> w = tape.parameters(np.array([1.0, -2.0]))
>>> backward(tape, sum_squares(w))
array([ 2., -4.])
"""

from __future__ import annotations

import numpy as np


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list = []
        self.param_index: int | None = None

    def __len__(self):
        return len(self.values)

    def push(self, value, parents=(), vjp=None) -> "Var":
        self.values.append(value)
        self.parents.append(tuple(p.index for p in parents))
        self.vjps.append(vjp)
        return Var(self, len(self.values) - 1)

    def leaf(self, value) -> "Var":
        return self.push(np.asarray(value, dtype=np.float64))

    def parameters(self, theta) -> "Var":
        """Register the flat parameter vector whose gradient backward returns."""
        if self.param_index is not None:
            raise RuntimeError("tape already has a parameter leaf")
        var = self.leaf(np.array(theta, dtype=np.float64).ravel())
        self.param_index = var.index
        return var


class Var:
    __slots__ = ("tape", "index")
    __array_priority__ = 100.0

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _vars(*xs):
    return tuple(x for x in xs if isinstance(x, Var))


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _record(out, inputs, grads_fn):
    """Push ``out`` with a vjp that returns cotangents for the Var inputs only."""
    tape = _tape_of(*inputs)
    if tape is None:
        return out
    mask = [isinstance(x, Var) for x in inputs]

    def vjp(g):
        grads = grads_fn(g)
        return tuple(gr for gr, keep in zip(grads, mask) if keep)

    return tape.push(out, _vars(*inputs), vjp)


def constant(tape: Tape, x) -> Var:
    return tape.leaf(x)


def add(a, b):
    va, vb = value(a), value(b)
    return _record(va + vb, (a, b), lambda g: (_unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)))


def neg(a):
    if not isinstance(a, Var):
        return -value(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    va, vb = value(a), value(b)
    return _record(
        va * vb, (a, b), lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape))
    )


def matmul(a, b):
    """``a @ b`` for 1-D or 2-D operands."""
    va, vb = value(a), value(b)
    if va.ndim > 2 or vb.ndim > 2:
        raise ValueError("matmul supports 1-D and 2-D operands")

    def grads(g):
        a2 = va.reshape(1, -1) if va.ndim == 1 else va
        b2 = vb.reshape(-1, 1) if vb.ndim == 1 else vb
        g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
        return (
            (g2 @ b2.T).reshape(va.shape),
            (a2.T @ g2).reshape(vb.shape),
        )

    return _record(va @ vb, (a, b), grads)


def sum_(a, axis=None):
    va = value(a)

    def grads(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, va.shape).copy(),)

    return _record(np.sum(va, axis=axis), (a,), grads)


def mean(a, axis=None):
    va = value(a)
    count = va.size if axis is None else va.shape[axis]
    return mul(sum_(a, axis), 1.0 / count)


def sum_squares(a, axis=None):
    """Squared Euclidean norm, over all entries or along ``axis``."""
    va = value(a)

    def grads(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (2.0 * g * va,)

    return _record(np.sum(va * va, axis=axis), (a,), grads)


def reshape(a, shape):
    va = value(a)
    return _record(va.reshape(shape), (a,), lambda g: (np.reshape(g, va.shape),))


def transpose(a):
    va = value(a)
    return _record(va.T, (a,), lambda g: (np.transpose(g),))


def getitem(a, key):
    va = value(a)

    def grads(g):
        out = np.zeros_like(va)
        np.add.at(out, key, g)
        return (out,)

    return _record(va[key], (a,), grads)


def take(a, index, axis=-1):
    """Gather ``index`` along ``axis`` (slicing, permutations, row picks)."""
    va = value(a)
    index = np.asarray(index, dtype=np.int64)

    def grads(g):
        out = np.zeros_like(va)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (out,)

    return _record(np.take(va, index, axis=axis), (a,), grads)


def embed(a, index, size, axis=-1):
    """Scatter ``a`` into zeros of length ``size`` along ``axis`` (zero-filling)."""
    va = value(a)
    index = np.asarray(index, dtype=np.int64)
    shape = list(va.shape)
    shape[axis] = size
    out = np.zeros(shape)
    np.moveaxis(out, axis, 0)[index] = np.moveaxis(va, axis, 0)
    return _record(out, (a,), lambda g: (np.take(g, index, axis=axis),))


def concatenate(xs, axis=0):
    vals = [value(x) for x in xs]
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def grads(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(np.concatenate(vals, axis=axis), tuple(xs), grads)


def stack(xs, axis=0):
    vals = [value(x) for x in xs]

    def grads(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return _record(np.stack(vals, axis=axis), tuple(xs), grads)


_ACTIVATIONS = {
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "softplus": (
        lambda x: np.logaddexp(0.0, x),
        lambda x, y: 0.5 * (1.0 + np.tanh(0.5 * x)),
    ),
    "identity": (lambda x: x, lambda x, y: np.ones_like(x)),
}


def pointwise(a, kind: str = "relu"):
    try:
        fn, deriv = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    va = value(a)
    out = fn(va)
    return _record(out, (a,), lambda g: (g * deriv(va, out),))


def relu(a):
    return pointwise(a, "relu")


def tanh(a):
    return pointwise(a, "tanh")


def _kernel_image(k, shape):
    """Place a centered (O, C, kh, kw) kernel on a periodic (H, W) grid."""
    o, c, kh, kw = k.shape
    h, w = shape
    img = np.zeros((o, c, h, w))
    rows = (np.arange(kh) - kh // 2) % h
    cols = (np.arange(kw) - kw // 2) % w
    np.add.at(img, (slice(None), slice(None), rows[:, None], cols[None, :]), k)
    return img, rows, cols


def circular_conv2d(x, k):
    """Periodic cross-correlation of a (B, C, H, W) batch with a centered
    (O, C, kh, kw) kernel; commutes exactly with cyclic shifts of the grid."""
    vx, vk = value(x), value(k)
    b, c, h, w = vx.shape
    o = vk.shape[0]
    if vk.shape[1] != c:
        raise ValueError(f"kernel expects {vk.shape[1]} channels, input has {c}")
    kimg, rows, cols = _kernel_image(vk, (h, w))
    xf = np.fft.rfft2(vx)  # (B, C, H, F)
    kf = np.fft.rfft2(kimg)  # (O, C, H, F)
    fshape = xf.shape[2:]
    xf2 = xf.reshape(b, c, -1).transpose(2, 0, 1)  # (F, B, C)
    kf2 = kf.reshape(o, c, -1).transpose(2, 1, 0)  # (F, C, O)
    out_f = np.matmul(xf2, np.conj(kf2)).transpose(1, 2, 0).reshape(b, o, *fshape)
    out = np.fft.irfft2(out_f, s=(h, w))

    def grads(g):
        gf = np.fft.rfft2(g).reshape(b, o, -1).transpose(2, 0, 1)  # (F, B, O)
        gx = np.matmul(gf, kf2.transpose(0, 2, 1)).transpose(1, 2, 0).reshape(b, c, *fshape)
        gx = np.fft.irfft2(gx, s=(h, w))
        # (F, O, B) @ (F, B, C) -> (F, O, C)
        gkf = np.matmul(np.conj(gf).transpose(0, 2, 1), xf2).transpose(1, 2, 0).reshape(o, c, *fshape)
        gkimg = np.fft.irfft2(gkf, s=(h, w))
        gk = gkimg[:, :, rows[:, None], cols[None, :]]
        return gx, gk

    return _record(out, (x, k), grads)


def backward(tape: Tape, output: Var) -> np.ndarray:
    """Gradient of the scalar ``output`` with respect to the parameter leaf.

    Returns an empty vector when the tape has no parameters.
    """
    return gradients(tape, output, None)


def gradients(tape: Tape, output: Var, wrt=None):
    """Reverse sweep.  ``wrt`` is a list of Vars (returns a list of arrays) or
    None for the parameter leaf."""
    if not isinstance(output, Var) or output.tape is not tape:
        raise ValueError("output must be a Var recorded on this tape")
    if np.size(output.value) != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads: list = [None] * len(tape)
    grads[output.index] = np.ones_like(output.value)
    for i in range(output.index, -1, -1):
        g = grads[i]
        if g is None or tape.vjps[i] is None:
            continue
        for p, gp in zip(tape.parents[i], tape.vjps[i](g)):
            grads[p] = gp if grads[p] is None else grads[p] + gp

    def grad_of(index):
        return grads[index] if grads[index] is not None else np.zeros_like(tape.values[index])

    if wrt is None:
        if tape.param_index is None:
            return np.zeros(0)
        return grad_of(tape.param_index)
    return [grad_of(v.index) for v in wrt]


def numerical_gradient(fn, theta, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    theta = np.array(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step.flat[i] = eps
        out.flat[i] = (fn(theta + step) - fn(theta - step)) / (2 * eps)
    return out
