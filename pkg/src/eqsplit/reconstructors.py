"""Reconstruction functions f(y, A) and the constructions that make them
equivariant, i.e. f(y, A T_g) = T_g^{-1} f(y, A) for every group element.

All reconstructors evaluate batches: ``y`` has shape (B, m) and ``A`` is a
single (m, n) matrix shared by the batch.  ``forward`` records the
computation on an autodiff tape; calling the object evaluates numerically.
"""

from __future__ import annotations

import copy
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .group import GroupAction, apply_inverse, build_shift_group
from .operators import as_matrix, virtual_matrix
from .priors import map_gaussian, posterior_mean_discrete, posterior_mean_gmm
from .qanalysis import canonical_key

BY_CONSTRUCTION = "by-construction"
NO_CLAIM = "none"
RIDGE = 1e-12
EXACT_REYNOLDS_MAX_ORDER = 64
EQUIV_CAP_DB = 150.0


def glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class _ParamLayout:
    """Named slices into one flat parameter vector."""

    def __init__(self):
        self.entries: list[tuple[str, tuple[int, ...], int]] = []
        self.size = 0

    def add(self, name, shape):
        self.entries.append((name, tuple(shape), self.size))
        self.size += int(np.prod(shape))

    def unpack(self, theta):
        out = {}
        for name, shape, start in self.entries:
            stop = start + int(np.prod(shape))
            out[name] = ad.reshape(theta[start:stop], shape)
        return out


# --- projections ----------------------------------------------------------

_PINV_CACHE: OrderedDict = OrderedDict()


def pinv_rows(A: np.ndarray) -> tuple[np.ndarray, bool]:
    """Return (P, regularized) with y @ P = A^dagger y for full-row-rank A.

    Rank-deficient A A^T falls back to a ridge of 1e-12 and is flagged.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    key = (A.shape, A.tobytes())
    hit = _PINV_CACHE.get(key)
    if hit is not None:
        _PINV_CACHE.move_to_end(key)
        return hit
    if A.shape[0] == 0:
        res = (np.zeros_like(A), False)
    else:
        gram = A @ A.T
        evals = np.linalg.eigvalsh(gram)
        regularized = evals[0] <= 1e-12 * max(evals[-1], 1e-300)
        if regularized:
            gram = gram + RIDGE * np.eye(A.shape[0])
        res = (np.linalg.solve(gram, A), bool(regularized))
    _PINV_CACHE[key] = res
    if len(_PINV_CACHE) > 16:
        _PINV_CACHE.popitem(last=False)
    return res


def backproject(y, A, mode: str = "adjoint"):
    """A^T y or A^dagger y for a batch of rows ``y`` (Var or array)."""
    A = np.asarray(A, dtype=np.float64)
    if mode == "adjoint":
        return ad.matmul(y, A)
    if mode in ("pinv", "pseudoinverse"):
        P, regularized = pinv_rows(A)
        if regularized:
            warnings.warn("A A^T is rank deficient; using a ridge-regularized pseudoinverse", stacklevel=3)
        return ad.matmul(y, P)
    raise ValueError(f"unknown backprojection mode {mode!r}")


# --- denoisers --------------------------------------------------------------


class Denoiser:
    """Image-to-image map phi acting on (B, C, n) channel stacks, returning (B, n)."""

    equivariant = False
    action: GroupAction | None = None
    in_channels = 1

    def __init__(self, params=None):
        self.params = np.zeros(0) if params is None else np.asarray(params, dtype=np.float64)

    @property
    def n_params(self) -> int:
        return self.params.size

    def forward(self, tape, theta, x):
        raise NotImplementedError

    def __call__(self, x, params=None):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x.reshape(1, 1, -1) if single else (x[:, None, :] if x.ndim == 2 else x)
        tape = ad.Tape()
        theta = tape.parameters(self.params if params is None else params)
        out = ad.value(self.forward(tape, theta, xb))
        return out[0] if single else out


class IdentityDenoiser(Denoiser):
    equivariant = True

    def forward(self, tape, theta, x):
        return ad.take(x, [0], axis=1).reshape(ad.value(x).shape[0], -1)


class FunctionDenoiser(Denoiser):
    """Wrap a numeric image-to-image function (no gradients)."""

    def __init__(self, fn, equivariant=False, action=None):
        super().__init__()
        self.fn = fn
        self.equivariant = equivariant
        self.action = action

    def forward(self, tape, theta, x):
        return tape.leaf(self.fn(ad.value(x)[:, 0, :]))


class ConvDenoiser(Denoiser):
    """Circular-convolution MLP on an H x W grid; exactly shift-equivariant.

    ``positional_bias`` adds a learned per-pixel output offset, which breaks
    shift equivariance (used for non-equivariant ablations).
    """

    def __init__(self, shape, hidden=(16, 16), kernel=5, in_channels=1, activation="relu",
                 residual=True, positional_bias=False, seed=0):
        self.shape = tuple(shape)
        self.hidden = tuple(hidden)
        self.kernel = int(kernel)
        self.in_channels = int(in_channels)
        self.activation = activation
        self.residual = residual
        self.positional_bias = positional_bias
        self.equivariant = not positional_bias
        h, w = self.shape
        self.action = build_shift_group(w, h) if self.equivariant else None
        kh = 1 if h == 1 else self.kernel
        self.layout = _ParamLayout()
        chans = (self.in_channels, *self.hidden, 1)
        for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
            self.layout.add(f"k{i}", (cout, cin, kh, self.kernel))
            self.layout.add(f"b{i}", (1, cout, 1, 1))
        if positional_bias:
            self.layout.add("pos", (1, h * w))
        rng = np.random.default_rng(seed)
        params = np.zeros(self.layout.size)
        for name, shp, start in self.layout.entries:
            if name.startswith("k"):
                rf = shp[2] * shp[3]
                params[start:start + int(np.prod(shp))] = glorot(rng, shp, shp[1] * rf, shp[0] * rf).ravel()
        super().__init__(params)

    def forward(self, tape, theta, x):
        p = self.layout.unpack(theta)
        b = ad.value(x).shape[0]
        h, w = self.shape
        z = ad.reshape(x, (b, self.in_channels, h, w))
        depth = len(self.hidden) + 1
        for i in range(depth):
            z = ad.circular_conv2d(z, p[f"k{i}"]) + p[f"b{i}"]
            if i < depth - 1:
                z = ad.pointwise(z, self.activation)
        out = ad.reshape(z, (b, h * w))
        if self.residual:
            out = out + ad.reshape(ad.take(x, [0], axis=1), (b, h * w))
        if self.positional_bias:
            out = out + p["pos"]
        return out


class MLPDenoiser(Denoiser):
    """Dense two-layer perceptron; not equivariant to anything in general."""

    def __init__(self, n, hidden=32, in_channels=1, activation="tanh", seed=0):
        self.n = n
        self.in_channels = in_channels
        self.activation = activation
        self.layout = _ParamLayout()
        d = n * in_channels
        self.layout.add("w0", (d, hidden))
        self.layout.add("b0", (hidden,))
        self.layout.add("w1", (hidden, n))
        self.layout.add("b1", (n,))
        rng = np.random.default_rng(seed)
        params = np.concatenate([
            glorot(rng, (d, hidden), d, hidden).ravel(), rng.normal(0, 0.1, hidden),
            glorot(rng, (hidden, n), hidden, n).ravel(), rng.normal(0, 0.1, n),
        ])
        super().__init__(params)

    def forward(self, tape, theta, x):
        p = self.layout.unpack(theta)
        b = ad.value(x).shape[0]
        z = ad.reshape(x, (b, self.n * self.in_channels))
        z = ad.pointwise(z @ p["w0"] + p["b0"], self.activation)
        return z @ p["w1"] + p["b1"]


class GroupAveragedDenoiser(Denoiser):
    """phi(x) = mean_g T_g^{-1} psi(T_g x), equivariant for any psi."""

    equivariant = True

    def __init__(self, base: Denoiser, action: GroupAction):
        super().__init__(base.params)
        self.base = base
        self.action = action
        self.in_channels = base.in_channels

    def forward(self, tape, theta, x):
        total = None
        for g in range(self.action.order):
            out = self.base.forward(tape, theta, ad.take(x, self.action.perms[g], axis=-1))
            back = ad.take(out, self.action.perms[self.action.inverse(g)], axis=-1)
            total = back if total is None else total + back
        return total * (1.0 / self.action.order)


# --- reconstructors ----------------------------------------------------------


class Reconstructor:
    equivariance_claim = NO_CLAIM
    action: GroupAction | None = None
    arch = "generic"

    def __init__(self, params=None):
        self.params = np.zeros(0) if params is None else np.asarray(params, dtype=np.float64)

    @property
    def n_params(self) -> int:
        return self.params.size

    def forward(self, tape, theta, y, A):
        raise NotImplementedError

    def __call__(self, y, A, params=None):
        A = as_matrix(A)
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        tape = ad.Tape()
        theta = tape.parameters(self.params if params is None else params)
        out = ad.value(self.forward(tape, theta, y.reshape(1, -1) if single else y, A))
        return out[0] if single else out

    def evaluate(self, y, A, params=None):
        return self(y, A, params)

    def with_params(self, params) -> "Reconstructor":
        new = copy.copy(self)
        new.params = np.array(params, dtype=np.float64)
        return new


class CountingReconstructor(Reconstructor):
    """Pass-through wrapper counting forward evaluations."""

    def __init__(self, base: Reconstructor):
        super().__init__(base.params)
        self.base = base
        self.calls = 0
        self.equivariance_claim = base.equivariance_claim
        self.action = base.action

    def forward(self, tape, theta, y, A):
        self.calls += 1
        return self.base.forward(tape, theta, y, A)


class ClosedForm(Reconstructor):
    """Numeric reconstructor without parameters (oracles, baselines, probes)."""

    def __init__(self, fn, claim=NO_CLAIM, action=None, arch="closed-form"):
        super().__init__()
        self.fn = fn
        self.equivariance_claim = claim
        self.action = action
        self.arch = arch

    def forward(self, tape, theta, y, A):
        return tape.leaf(self.fn(ad.value(y), A))


def mmse_discrete(prior, sigma: float) -> ClosedForm:
    return ClosedForm(lambda y, A: posterior_mean_discrete(prior, y, A, sigma),
                      BY_CONSTRUCTION if prior.symmetrized else NO_CLAIM, prior.action, "mmse-discrete")


def mmse_gmm(prior, sigma: float) -> ClosedForm:
    return ClosedForm(lambda y, A: posterior_mean_gmm(prior, y, A, sigma),
                      BY_CONSTRUCTION if prior.symmetrized else NO_CLAIM, prior.action, "mmse-gmm")


def map_oracle(mean, cov, sigma: float, action=None) -> ClosedForm:
    return ClosedForm(lambda y, A: map_gaussian(mean, cov, y, A, sigma),
                      BY_CONSTRUCTION if action is not None else NO_CLAIM, action, "map-gaussian")


class ArtifactRemoval(Reconstructor):
    """f(y, A) = phi(A^T y) or phi(A^dagger y).

    ``coverage`` appends diag(A^T A) as a second input channel (the sampling
    mask for row-mask operators).  ``rescale`` multiplies the backprojection
    by n / m so that its scale does not depend on the number of rows.
    """

    arch = "artifact-removal"

    def __init__(self, denoiser: Denoiser, mode="adjoint", coverage=False, rescale=False):
        super().__init__(denoiser.params)
        if mode == "pseudoinverse":
            mode = "pinv"
        self.denoiser = denoiser
        self.mode = mode
        self.coverage = coverage
        self.rescale = rescale
        self.equivariance_claim = BY_CONSTRUCTION if denoiser.equivariant else NO_CLAIM
        self.action = denoiser.action
        expected = 2 if coverage else 1
        if denoiser.in_channels != expected:
            raise ValueError(f"denoiser takes {denoiser.in_channels} channels, reconstructor feeds {expected}")

    @property
    def regularized_last(self) -> bool:
        return False

    def features(self, y, A):
        A = np.asarray(A)
        m, n = A.shape
        z = backproject(y, A, self.mode)
        if self.rescale and m > 0:
            z = z * (n / m)
        b = ad.value(y).shape[0]
        chans = [ad.reshape(z, (b, 1, n))]
        if self.coverage:
            cov = np.broadcast_to(np.sum(A * A, axis=0), (b, 1, n))
            chans.append(cov)
            return ad.concatenate(chans, axis=1) if isinstance(chans[0], ad.Var) else np.concatenate(chans, axis=1)
        return chans[0]

    def forward(self, tape, theta, y, A):
        return self.denoiser.forward(tape, theta, self.features(y, A))


def artifact_removal(d: Denoiser, mode="adjoint", **kw) -> ArtifactRemoval:
    return ArtifactRemoval(d, mode, **kw)


class UnrolledDiagnostic(RuntimeWarning):
    pass


class Unrolled(Reconstructor):
    """x_0 = 0, x_{k+1} = phi(x_k - gamma A^T (A x_k - y)), f = x_L; phi is shared."""

    arch = "unrolled"

    def __init__(self, denoiser: Denoiser, gamma: float, iterations: int = 3):
        if iterations < 1:
            raise ValueError("need at least one iteration")
        super().__init__(denoiser.params)
        self.denoiser = denoiser
        self.gamma = float(gamma)
        self.iterations = int(iterations)
        self.equivariance_claim = BY_CONSTRUCTION if denoiser.equivariant else NO_CLAIM
        self.action = denoiser.action

    def forward(self, tape, theta, y, A):
        A = np.asarray(A)
        b = ad.value(y).shape[0]
        x = np.zeros((b, A.shape[1]))
        for _ in range(self.iterations):
            resid = ad.matmul(x, A.T) - y
            z = x - self.gamma * ad.matmul(resid, A)
            x = self.denoiser.forward(tape, theta, ad.reshape(z, (b, 1, A.shape[1])))
            if np.abs(ad.value(x)).max() > 1e6:
                warnings.warn("unrolled iterate norm exceeded 1e6; step size may diverge",
                              UnrolledDiagnostic, stacklevel=2)
        return x


def unrolled(d: Denoiser, gamma: float, L: int = 3) -> Unrolled:
    return Unrolled(d, gamma, L)


class Reynolds(Reconstructor):
    """f(y, A) = mean_g T_g r(y, A T_g).

    The sum is exact for groups up to order 64 (or ``exact=True``); larger
    groups, or ``exact=False``, use one uniformly drawn element per call.
    """

    arch = "reynolds"

    def __init__(self, base: Reconstructor, action: GroupAction, exact=None, seed=0):
        super().__init__(base.params)
        self.base = base
        self.action = action
        self.exact = action.order <= EXACT_REYNOLDS_MAX_ORDER if exact is None else exact
        self.rng = np.random.default_rng(seed)
        self.equivariance_claim = BY_CONSTRUCTION

    def forward(self, tape, theta, y, A):
        elems = range(self.action.order) if self.exact else [self.action.random_element(self.rng)]
        total = None
        for g in elems:
            out = self.base.forward(tape, theta, y, virtual_matrix(A, self.action, g))
            moved = ad.take(out, self.action.perms[g], axis=-1)
            total = moved if total is None else total + moved
        return total * (1.0 / len(elems))


def reynolds_average(r: Reconstructor, action: GroupAction, **kw) -> Reynolds:
    return Reynolds(r, action, **kw)


class Linear(Reconstructor):
    """f = W (A1^T y1) + b.  With ``keys`` every split operator (by canonical
    key) gets its own (W, b) block."""

    arch = "linear"

    def __init__(self, n, keys=None, params=None):
        self.n = n
        self.keys = None if keys is None else {k: i for i, k in enumerate(keys)}
        blocks = 1 if keys is None else len(self.keys)
        size = blocks * (n * n + n)
        super().__init__(np.zeros(size) if params is None else params)
        if self.params.size != size:
            raise ValueError(f"linear model expects {size} parameters")

    @classmethod
    def from_matrix(cls, W, b=None):
        W = np.asarray(W, dtype=np.float64)
        b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
        return cls(W.shape[0], params=np.concatenate([W.ravel(), b]))

    def block(self, A):
        if self.keys is None:
            return 0
        try:
            return self.keys[canonical_key(A)]
        except KeyError:
            raise KeyError("split operator not among the linear model's keys") from None

    def forward(self, tape, theta, y, A):
        n = self.n
        start = self.block(A) * (n * n + n)
        W = ad.reshape(theta[start:start + n * n], (n, n))
        b = theta[start + n * n:start + n * n + n]
        z = ad.matmul(y, np.asarray(A))
        return ad.matmul(z, ad.transpose(W)) + b


class Tabular(Reconstructor):
    """One free output vector per enumerated (y1, A1) key."""

    arch = "tabular"

    def __init__(self, n, keys, params=None):
        self.n = n
        self.keys = {k: i for i, k in enumerate(keys)}
        size = len(self.keys) * n
        super().__init__(np.zeros(size) if params is None else params)

    def index(self, y, A):
        y = ad.value(y)
        try:
            return [self.keys[canonical_key(A, row)] for row in y]
        except KeyError:
            raise KeyError("input (y1, A1) outside the enumerated table") from None

    def forward(self, tape, theta, y, A):
        table = ad.reshape(theta, (len(self.keys), self.n))
        return ad.take(table, self.index(y, A), axis=0)


def make_parametric(arch: str, dims: dict, equivariant=True, action=None, seed=0) -> Reconstructor:
    """Factory for trainable reconstructors.

    ``linear``: needs ``n`` (and optional ``keys``).  ``tabular``: ``n`` and
    ``keys``.  ``conv-mlp``: ``shape`` plus optional ``hidden``, ``kernel``,
    ``mode``, ``coverage``, ``rescale``, ``activation``, ``residual``.
    A dihedral ``action`` wraps the conv-mlp in an exact Reynolds average.
    """
    if arch == "linear":
        return Linear(dims["n"], dims.get("keys"))
    if arch == "tabular":
        if dims.get("keys") is None:
            raise ValueError("tabular model needs the enumerated input keys")
        return Tabular(dims["n"], dims["keys"])
    if arch == "conv-mlp":
        coverage = bool(dims.get("coverage", False))
        den = ConvDenoiser(
            dims["shape"], hidden=dims.get("hidden", (16, 16)), kernel=dims.get("kernel", 5),
            in_channels=2 if coverage else 1, activation=dims.get("activation", "relu"),
            residual=dims.get("residual", True), positional_bias=not equivariant, seed=seed,
        )
        f = ArtifactRemoval(den, dims.get("mode", "adjoint"), coverage=coverage,
                            rescale=bool(dims.get("rescale", False)))
        if equivariant and action is not None and action.label.startswith("dihedral"):
            f = Reynolds(f, action, exact=dims.get("exact_reynolds"))
        f.dims = dict(dims, equivariant=equivariant,
                      dihedral=isinstance(f, Reynolds), seed=seed)
        f.arch = "conv-mlp"
        return f
    raise ValueError(f"unknown architecture {arch!r}")


# --- equivariance checks -------------------------------------------------------


@dataclass
class EquivarianceReport:
    max_residual: float
    per_g: np.ndarray

    @property
    def passed(self) -> bool:
        return self.max_residual <= 1e-9


def check_equivariance(f, action: GroupAction, trials: int = 100, seed=0, m=None) -> EquivarianceReport:
    """max over trials and g of ||f(y, A T_g) - T_g^{-1} f(y, A)||_inf for
    random y and dense Gaussian A."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = action.n
    m = max(1, n // 2) if m is None else m
    rng = np.random.default_rng(seed)
    per_g = np.zeros(action.order)
    for _ in range(trials):
        A = rng.standard_normal((m, n)) / np.sqrt(m)
        y = rng.standard_normal(m)
        base = f(y, A)
        for g in range(action.order):
            res = f(y, virtual_matrix(A, action, g)) - apply_inverse(action, g, base)
            per_g[g] = max(per_g[g], float(np.abs(res).max()))
    return EquivarianceReport(float(per_g.max()), per_g)


def equiv_metric(f, ys, op, action: GroupAction, seed=0, exhaustive=False) -> float:
    """EQUIV in dB: -10 log10 of the mean per-pixel squared equivariance residual."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if ys.shape[0] == 0:
        raise ValueError("empty dataset")
    A = as_matrix(op)
    base = f(ys, A)
    rng = np.random.default_rng(seed)
    if exhaustive:
        errs = [np.mean((f(ys, virtual_matrix(A, action, g)) - apply_inverse(action, g, base)) ** 2)
                for g in range(action.order)]
        mse = float(np.mean(errs))
    else:
        gs = rng.integers(action.order, size=ys.shape[0])
        sq = []
        for g in np.unique(gs):
            idx = gs == g
            r = f(ys[idx], virtual_matrix(A, action, g)) - apply_inverse(action, g, base[idx])
            sq.append(np.sum(r**2))
        mse = float(np.sum(sq) / base.size)
    return EQUIV_CAP_DB if mse <= 10 ** (-EQUIV_CAP_DB / 10) else min(EQUIV_CAP_DB, -10 * np.log10(mse))


# --- checkpoints -----------------------------------------------------------------

_CK_MAGIC = b"EQCK"
_ACTIVATION_CODES = {"relu": 0, "tanh": 1, "softplus": 2, "identity": 3}
_MODE_CODES = {"adjoint": 0, "pinv": 1}


class CheckpointFormatError(ValueError):
    pass


def _dims_of(f) -> tuple[str, list[int]]:
    if isinstance(f, Linear) and f.keys is None:
        return "linear", [f.n]
    if getattr(f, "arch", None) == "conv-mlp" and hasattr(f, "dims"):
        d = f.dims
        hidden = list(d.get("hidden", (16, 16)))
        h, w = d["shape"]
        return "conv-mlp", [
            h, w, int(d.get("kernel", 5)), int(bool(d.get("coverage", False))), int(bool(d.get("rescale", False))),
            int(bool(d.get("residual", True))), _MODE_CODES[d.get("mode", "adjoint")], int(bool(d["equivariant"])),
            int(bool(d["dihedral"])), _ACTIVATION_CODES[d.get("activation", "relu")], int(d.get("seed", 0)),
            len(hidden), *hidden,
        ]
    raise TypeError(f"cannot checkpoint a {type(f).__name__} reconstructor")


def save_checkpoint(path, f) -> None:
    """Layout (little-endian): magic "EQCK", u32 tag length, tag bytes, u32 dim
    count, i64 dims, u64 parameter count, f64 parameters."""
    tag, dims = _dims_of(f)
    raw = tag.encode()
    with open(path, "wb") as fh:
        fh.write(_CK_MAGIC)
        fh.write(np.uint32(len(raw)).astype("<u4").tobytes() + raw)
        fh.write(np.uint32(len(dims)).astype("<u4").tobytes())
        fh.write(np.asarray(dims, dtype="<i8").tobytes())
        fh.write(np.uint64(f.params.size).astype("<u8").tobytes())
        fh.write(np.asarray(f.params, dtype="<f8").tobytes())


def load_checkpoint(path) -> Reconstructor:
    data = open(path, "rb").read()
    try:
        if data[:4] != _CK_MAGIC:
            raise CheckpointFormatError(f"bad magic {data[:4]!r}")
        off = 4
        (tlen,) = np.frombuffer(data, "<u4", 1, off)
        off += 4
        tag = data[off:off + tlen].decode()
        off += int(tlen)
        (ndims,) = np.frombuffer(data, "<u4", 1, off)
        off += 4
        dims = [int(v) for v in np.frombuffer(data, "<i8", int(ndims), off)]
        off += 8 * int(ndims)
        (count,) = np.frombuffer(data, "<u8", 1, off)
        off += 8
        params = np.frombuffer(data, "<f8", int(count), off).copy()
        off += 8 * int(count)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"truncated or corrupt checkpoint: {exc}") from exc
    if off != len(data):
        raise CheckpointFormatError(f"{len(data) - off} trailing bytes")
    if tag == "linear":
        f = Linear(dims[0])
    elif tag == "conv-mlp":
        h, w, kernel, coverage, rescale, residual, mode, equivariant, dihedral, act, seed, nh = dims[:12]
        spec = {
            "shape": (h, w), "kernel": kernel, "coverage": bool(coverage), "rescale": bool(rescale),
            "residual": bool(residual), "mode": {v: k for k, v in _MODE_CODES.items()}[mode],
            "activation": {v: k for k, v in _ACTIVATION_CODES.items()}[act], "hidden": tuple(dims[12:12 + nh]),
        }
        action = None
        if dihedral:
            from .group import build_dihedral_group

            action = build_dihedral_group(w, h)
        f = make_parametric("conv-mlp", spec, bool(equivariant), action, seed)
    else:
        raise CheckpointFormatError(f"unknown architecture tag {tag!r}")
    if f.params.size != params.size:
        raise CheckpointFormatError(f"{tag} with dims {dims} expects {f.params.size} parameters, file has {params.size}")
    return f.with_params(params)
