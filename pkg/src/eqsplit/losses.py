"""Training objectives over reconstructor parameters.

Every loss takes a batch ``y`` of shape (B, m) measured through one operator
``A`` and returns a :class:`LossValue` whose gradient comes from a fresh
autodiff tape.  Per-sample squared norms are averaged over the batch, or
weighted by ``sample_weights`` when an exact expectation over signals is
wanted.  Stochastic losses draw one (g, split, noise) realization per batch
from three independent streams of ``seed``, so losses that share a seed
also share their split.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .group import GroupAction
from .operators import SplitRule, as_matrix, draw_rows, enumerate_splits, virtual_matrix
from .reconstructors import BY_CONSTRUCTION

KINDS = ("sup", "mc", "split", "ei", "es", "es-reduced", "ges", "sure")
DEFAULT_LAMBDA = 1.0
DEFAULT_ALPHA = 0.5
SURE_STEP = 1e-3


class LossConfigError(ValueError):
    pass


class NotEquivariantError(ValueError):
    """Reduced ES loss requested for a reconstructor without an equivariance claim."""


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)


@dataclass
class LossSpec:
    kind: str
    lam: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ALPHA
    sigma: float = 0.0
    rule: SplitRule | None = None
    action: GroupAction | list | None = None
    mc_samples: int = 1
    probes: int = 1
    exact: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LossConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("split", "es", "es-reduced", "ges") and self.rule is None:
            raise LossConfigError(f"{self.kind} loss needs a split rule")
        if self.kind in ("ei", "es", "ges") and self.action is None:
            raise LossConfigError(f"{self.kind} loss needs a group action")
        if self.kind == "ei" and not self.lam > 0:
            raise LossConfigError("EI trade-off lambda must be positive")
        if self.kind == "ges" and not self.alpha > 0:
            raise LossConfigError("R2R alpha must be positive")
        if self.kind == "sure" and not self.sigma > 0:
            raise LossConfigError("SURE needs a positive noise level")
        if self.sigma < 0:
            raise LossConfigError("sigma must be non-negative")
        if self.mc_samples < 1 or self.probes < 1:
            raise LossConfigError("sample counts must be positive")


# --- plumbing ------------------------------------------------------------------


def streams(seed):
    """Independent (split, group, noise) generators derived from one seed."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def _batch(y, A):
    A = as_matrix(A)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None]
    if y.shape[-1] != A.shape[0]:
        raise ValueError(f"measurements have length {y.shape[-1]}, operator has {A.shape[0]} rows")
    return y, A


def _weights(sample_weights, b):
    if sample_weights is None:
        return np.full(b, 1.0 / b)
    w = np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (b,):
        raise ValueError("one weight per batch sample required")
    return w


def _wsq(r, w):
    """sum_b w_b ||r_b||^2."""
    return ad.sum_(ad.mul(ad.sum_squares(r, axis=-1), w))


def _run(f, params, build) -> LossValue:
    tape = ad.Tape()
    theta = tape.parameters(f.params if params is None else params)
    terms = build(tape, theta)
    total = None
    for v in terms.values():
        total = v if total is None else ad.add(total, v)
    if isinstance(total, ad.Var):
        grad = ad.backward(tape, total)
    else:
        grad = np.zeros(theta.value.size)
    return LossValue(float(ad.value(total)), grad, {k: float(ad.value(v)) for k, v in terms.items()})


def _accumulate(acc, terms, p):
    for k, v in terms.items():
        acc[k] = ad.mul(v, p) if k not in acc else ad.add(acc[k], ad.mul(v, p))
    return acc


def _remeasured(f, tape, theta, y, A, Ag, rows, w):
    """Consistency and prediction terms of ||A_g f(y[rows], A_g[rows]) - y||^2."""
    m = A.shape[0]
    mask = np.zeros(m, dtype=bool)
    mask[rows] = True
    rows2 = np.flatnonzero(~mask)
    xhat = f.forward(tape, theta, y[:, rows], Ag[rows])
    pred = ad.matmul(xhat, Ag.T)
    terms = {"consistency": _wsq(ad.take(pred, rows) - y[:, rows], w)}
    terms["prediction"] = _wsq(ad.take(pred, rows2) - y[:, rows2], w) if rows2.size else 0.0
    return terms


def _compose_draw(actions, rng):
    """One element from each action, composed into a single permutation."""
    if isinstance(actions, GroupAction):
        actions = [actions]
    perm = None
    for act in actions:
        p = act.perms[act.random_element(rng)]
        perm = p if perm is None else perm[p]
    return perm


# --- losses ----------------------------------------------------------------------


def sup_loss(f, x, y, A, params=None, sample_weights=None) -> LossValue:
    """||f(y, A) - x||^2."""
    y, A = _batch(y, A)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape != (y.shape[0], A.shape[1]):
        raise ValueError(f"ground truth has shape {x.shape}, expected {(y.shape[0], A.shape[1])}")
    w = _weights(sample_weights, y.shape[0])
    return _run(f, params, lambda tape, th: {"supervised": _wsq(f.forward(tape, th, y, A) - x, w)})


def mc_loss(f, y, A, params=None, sample_weights=None) -> LossValue:
    """||A f(y, A) - y||^2."""
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    return _run(f, params, lambda tape, th: {"consistency": _wsq(ad.matmul(f.forward(tape, th, y, A), A.T) - y, w)})


def split_loss(f, y, A, rule: SplitRule, seed=None, params=None, exact=False, sample_weights=None) -> LossValue:
    """||A f(y1, A1) - y||^2 for one split (y1, A1) = (M y, M A) per batch."""
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    if exact:
        support = enumerate_splits(rule, A.shape[0])
    else:
        support = [(draw_rows(rule, A.shape[0], streams(seed)[0]), 1.0)]

    def build(tape, th):
        acc = {}
        for rows, p in support:
            acc = _accumulate(acc, _remeasured(f, tape, th, y, A, A, list(rows), w), p)
        return acc

    return _run(f, params, build)


def es_loss(f, y, A, action: GroupAction, rule: SplitRule, seed=None, params=None, exact=False,
            sample_weights=None) -> LossValue:
    """||A T_g f(y1, A1) - y||^2 with A1 = M A T_g, for one (g, split) per batch."""
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    if exact:
        splits = enumerate_splits(rule, A.shape[0])
        support = [(g, rows, p / action.order) for g in range(action.order) for rows, p in splits]
    else:
        split_rng, group_rng, _ = streams(seed)
        g = action.random_element(group_rng)
        support = [(g, draw_rows(rule, A.shape[0], split_rng), 1.0)]

    def build(tape, th):
        acc = {}
        for g, rows, p in support:
            Ag = virtual_matrix(A, action, g)
            acc = _accumulate(acc, _remeasured(f, tape, th, y, A, Ag, list(rows), w), p)
        return acc

    return _run(f, params, build)


def es_loss_reduced(f, y, A, rule: SplitRule, seed=None, params=None, exact=False,
                    sample_weights=None) -> LossValue:
    """Splitting loss standing in for the ES loss of an equivariant reconstructor.

    Uses the same split stream as :func:`es_loss`, so with a shared seed the
    two agree pathwise whenever f is equivariant.
    """
    if getattr(f, "equivariance_claim", None) != BY_CONSTRUCTION:
        raise NotEquivariantError("reduced ES loss requires a reconstructor that is equivariant by construction")
    return split_loss(f, y, A, rule, seed, params, exact, sample_weights)


def ges_loss(f, y, A, action: GroupAction, rule: SplitRule, alpha=DEFAULT_ALPHA, sigma=0.0, seed=None,
             params=None, exact=False, sample_weights=None) -> LossValue:
    """Noisy ES loss with recorrupted pairs (y1 + alpha w, y1 - w / alpha), w ~ N(0, sigma^2 I).

    term "consistency" = ||A1 f(y1 + alpha w, A1) - (y1 - w / alpha)||^2,
    term "prediction"  = ||A2 f(y1 + alpha w, A1) - y2||^2.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    split_rng, group_rng, noise_rng = streams(seed)
    if exact:
        splits = enumerate_splits(rule, A.shape[0])
        support = [(g, rows, p / action.order) for g in range(action.order) for rows, p in splits]
    else:
        g = action.random_element(group_rng)
        support = [(g, draw_rows(rule, A.shape[0], split_rng), 1.0)]

    def build(tape, th):
        acc = {}
        m = A.shape[0]
        for g, rows, p in support:
            rows = list(rows)
            Ag = virtual_matrix(A, action, g)
            omega = sigma * noise_rng.standard_normal((y.shape[0], len(rows))) if sigma > 0 else 0.0
            mask = np.zeros(m, dtype=bool)
            mask[rows] = True
            rows2 = np.flatnonzero(~mask)
            y1 = y[:, rows]
            xhat = f.forward(tape, th, y1 + alpha * omega, Ag[rows])
            pred = ad.matmul(xhat, Ag.T)
            terms = {"consistency": _wsq(ad.take(pred, rows) - (y1 - omega / alpha), w)}
            terms["prediction"] = _wsq(ad.take(pred, rows2) - y[:, rows2], w) if rows2.size else 0.0
            acc = _accumulate(acc, terms, p)
        return acc

    return _run(f, params, build)


def _rademacher(rng, shape):
    return rng.integers(0, 2, size=shape) * 2.0 - 1.0


def _sure_terms(f, tape, th, y, A, sigma, probes, rng, w, tau=None):
    m = A.shape[0]
    xhat = f.forward(tape, th, y, A)
    pred = ad.matmul(xhat, A.T)
    terms = {"consistency": _wsq(pred - y, w), "offset": -m * sigma**2 * float(np.sum(w))}
    if tau is None:
        norms = np.linalg.norm(y, axis=1, keepdims=True)
        tau = SURE_STEP * np.where(norms > 0, norms, 1.0)
    div = 0.0
    for _ in range(probes):
        b = _rademacher(rng, y.shape)
        moved = ad.matmul(f.forward(tape, th, y + tau * b, A), A.T)
        per = ad.sum_(ad.mul(moved - pred, b / tau), axis=-1)
        div = ad.add(div, ad.sum_(ad.mul(per, w)))
    terms["divergence"] = ad.mul(div, 2.0 * sigma**2 / probes)
    return terms, xhat


def sure_loss(f, y, A, sigma: float, probes: int = 1, seed=None, params=None, sample_weights=None,
              tau=None) -> LossValue:
    """||A f(y) - y||^2 - m sigma^2 + 2 sigma^2 div(A f)(y), with a Monte-Carlo
    finite-difference divergence over Rademacher probes."""
    if not sigma > 0:
        raise ValueError("SURE needs sigma > 0")
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    rng = streams(seed)[2]
    return _run(f, params, lambda tape, th: _sure_terms(f, tape, th, y, A, sigma, probes, rng, w, tau)[0])


def divergence_estimate(f, y, A, probes: int = 1, seed=None, params=None, tau=None) -> np.ndarray:
    """Per-sample Monte-Carlo divergence of y -> A f(y, A)."""
    y, A = _batch(y, A)
    rng = streams(seed)[2]
    theta = f.params if params is None else params
    pred = f(y, A, theta) @ A.T
    if tau is None:
        norms = np.linalg.norm(y, axis=1, keepdims=True)
        tau = SURE_STEP * np.where(norms > 0, norms, 1.0)
    total = np.zeros(y.shape[0])
    for _ in range(probes):
        b = _rademacher(rng, y.shape)
        total += np.sum((f(y + tau * b, A, theta) @ A.T - pred) * b / tau, axis=-1)
    return total / probes


def ei_loss(f, y, A, action, lam=DEFAULT_LAMBDA, seed=None, params=None, sigma=0.0, probes=1,
            sample_weights=None) -> LossValue:
    """||A f(y, A) - y||^2 + lam ||T_g f(y, A) - f(A T_g f(y, A), A)||^2.

    ``action`` may be a list of actions; one element of each is drawn and the
    transforms are composed.  With ``sigma > 0`` the consistency term is
    replaced by SURE.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    y, A = _batch(y, A)
    w = _weights(sample_weights, y.shape[0])
    _, group_rng, noise_rng = streams(seed)
    perm = _compose_draw(action, group_rng)

    def build(tape, th):
        if sigma > 0:
            terms, xhat = _sure_terms(f, tape, th, y, A, sigma, probes, noise_rng, w)
        else:
            xhat = f.forward(tape, th, y, A)
            terms = {"consistency": _wsq(ad.matmul(xhat, A.T) - y, w)}
        moved = ad.take(xhat, perm)
        again = f.forward(tape, th, ad.matmul(moved, A.T), A)
        terms["equivariance"] = ad.mul(_wsq(moved - again, w), lam)
        return terms

    return _run(f, params, build)


def evaluate(spec: LossSpec, f, y, A, x=None, seed=None, params=None, sample_weights=None) -> LossValue:
    """Dispatch a :class:`LossSpec`; ``mc_samples`` > 1 averages independent draws."""
    if spec.mc_samples > 1 and spec.kind not in ("sup", "mc"):
        children = np.random.SeedSequence(seed).spawn(spec.mc_samples)
        vals = [evaluate(_single(spec), f, y, A, x, c, params, sample_weights) for c in children]
        k = len(vals)
        terms = {t: sum(v.terms[t] for v in vals) / k for t in vals[0].terms}
        return LossValue(sum(v.value for v in vals) / k, sum(v.gradient for v in vals) / k, terms)
    kw = dict(params=params, sample_weights=sample_weights)
    if spec.kind == "sup":
        if x is None:
            raise LossConfigError("supervised loss needs ground truth")
        return sup_loss(f, x, y, A, **kw)
    if spec.kind == "mc":
        return mc_loss(f, y, A, **kw)
    if spec.kind == "split":
        return split_loss(f, y, A, spec.rule, seed, exact=spec.exact, **kw)
    if spec.kind == "es":
        return es_loss(f, y, A, spec.action, spec.rule, seed, exact=spec.exact, **kw)
    if spec.kind == "es-reduced":
        return es_loss_reduced(f, y, A, spec.rule, seed, exact=spec.exact, **kw)
    if spec.kind == "ges":
        return ges_loss(f, y, A, spec.action, spec.rule, spec.alpha, spec.sigma, seed, exact=spec.exact, **kw)
    if spec.kind == "sure":
        return sure_loss(f, y, A, spec.sigma, spec.probes, seed, **kw)
    return ei_loss(f, y, A, spec.action, spec.lam, seed, sigma=spec.sigma, probes=spec.probes, **kw)


def _single(spec: LossSpec) -> LossSpec:
    return replace(spec, mc_samples=1)
