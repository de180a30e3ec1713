"""Exactly invariant priors and their closed-form posterior estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .group import GroupAction, apply

CONSISTENCY_TOL = 1e-9


class NoPosteriorError(ValueError):
    """Noiseless measurement inconsistent with every prior atom."""


class SingularEvidenceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class DiscretePrior:
    atoms: np.ndarray
    weights: np.ndarray
    symmetrized: bool = False
    action: GroupAction | None = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (atoms.shape[0],):
            raise ValueError("one weight per atom required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    def sample(self, count: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.atoms[rng.choice(len(self.weights), size=count, p=self.weights)]


@dataclass(frozen=True, eq=False)
class GaussianMixturePrior:
    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray
    symmetrized: bool = False
    action: GroupAction | None = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covs = np.asarray(self.covariances, dtype=np.float64)
        if covs.ndim == 2:
            covs = covs[None]
        w = np.asarray(self.weights, dtype=np.float64)
        k, n = means.shape
        if covs.shape != (k, n, n) or w.shape != (k,):
            raise ValueError("inconsistent mixture component shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        for c in covs:
            if not np.allclose(c, c.T, atol=1e-12) or np.linalg.eigvalsh(c).min() <= 0:
                raise ValueError("covariances must be symmetric positive definite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.means.shape[1]

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        terms = []
        for mu, cov, w in zip(self.means, self.covariances, self.weights):
            chol = linalg.cho_factor(cov, lower=True)
            d = x - mu
            maha = np.einsum("bi,bi->b", d, linalg.cho_solve(chol, d.T).T)
            logdet = 2 * np.log(np.diag(chol[0])).sum()
            terms.append(np.log(w) - 0.5 * (maha + logdet + self.n * np.log(2 * np.pi)))
        return logsumexp(np.stack(terms), axis=0)

    def sample(self, count: int, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.weights), size=count, p=self.weights)
        out = np.empty((count, self.n))
        for k in np.unique(comp):
            idx = comp == k
            out[idx] = rng.multivariate_normal(self.means[k], self.covariances[k], size=idx.sum())
        return out


def _merge(keys, items, weights):
    order, merged = [], {}
    for key, item, w in zip(keys, items, weights):
        if key in merged:
            merged[key][1] += w
        else:
            merged[key] = [item, w]
            order.append(key)
    return [merged[k][0] for k in order], np.array([merged[k][1] for k in order])


def symmetrize(prior, action: GroupAction):
    """Uniform mixture of the pushforwards of ``prior`` under every T_g.

    Identical transformed atoms or components are merged, so an already
    invariant prior comes back with the same support.
    """
    if prior.n != action.n:
        raise ValueError(f"prior lives in {prior.n} dims, group acts on {action.n}")
    share = 1.0 / action.order
    if isinstance(prior, DiscretePrior):
        atoms, weights, keys = [], [], []
        for a, w in zip(prior.atoms, prior.weights):
            for g in range(action.order):
                t = apply(action, g, a)
                atoms.append(t)
                keys.append(t.tobytes())
                weights.append(w * share)
        atoms, weights = _merge(keys, atoms, weights)
        return DiscretePrior(np.array(atoms), weights / weights.sum(), True, action)
    if isinstance(prior, GaussianMixturePrior):
        comps, weights, keys = [], [], []
        for mu, cov, w in zip(prior.means, prior.covariances, prior.weights):
            for g in range(action.order):
                p = action.perms[g]
                tm, tc = mu[p], cov[np.ix_(p, p)]
                comps.append((tm, tc))
                keys.append(tm.tobytes() + tc.tobytes())
                weights.append(w * share)
        comps, weights = _merge(keys, comps, weights)
        return GaussianMixturePrior(
            np.array([c[0] for c in comps]), np.array([c[1] for c in comps]),
            weights / weights.sum(), True, action,
        )
    raise TypeError(f"cannot symmetrize {type(prior).__name__}")


def is_invariant(prior, action: GroupAction) -> bool:
    """Support closed under the group with matched weights (exact check)."""
    if isinstance(prior, DiscretePrior):
        table = {a.tobytes(): w for a, w in zip(prior.atoms, prior.weights)}
        for a, w in zip(prior.atoms, prior.weights):
            for g in range(action.order):
                if table.get(apply(action, g, a).tobytes()) != w:
                    return False
        return True
    table = {m.tobytes() + c.tobytes(): w for m, c, w in zip(prior.means, prior.covariances, prior.weights)}
    for m, c, w in zip(prior.means, prior.covariances, prior.weights):
        for g in range(action.order):
            p = action.perms[g]
            if table.get(m[p].tobytes() + c[np.ix_(p, p)].tobytes()) != w:
                return False
    return True


def posterior_weights_discrete(prior: DiscretePrior, y, A, sigma: float) -> np.ndarray:
    """Posterior probabilities of every atom given y = A x (+ noise); batched in y."""
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pred = prior.atoms @ A.T  # (K, m)
    resid = y[..., None, :] - pred  # (..., K, m)
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights)
    if sigma > 0:
        logp = logw - 0.5 * np.sum(resid * resid, axis=-1) / sigma**2
        return np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    ok = np.all(np.abs(resid) <= CONSISTENCY_TOL, axis=-1) & (prior.weights > 0)
    if np.any(~ok.any(axis=-1)):
        raise NoPosteriorError("no prior atom is consistent with the noiseless measurement")
    w = np.where(ok, prior.weights, 0.0)
    return w / w.sum(axis=-1, keepdims=True)


def posterior_mean_discrete(prior: DiscretePrior, y, A, sigma: float) -> np.ndarray:
    """E[x | y, A] for a discrete prior."""
    return posterior_weights_discrete(prior, y, A, sigma) @ prior.atoms


def posterior_mean_gmm(prior: GaussianMixturePrior, y, A, sigma: float) -> np.ndarray:
    """E[x | y, A] for a Gaussian mixture prior, by per-component conditioning."""
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = A.shape[0]
    single = y.ndim == 1
    yb = np.atleast_2d(y)
    if m == 0:
        out = np.broadcast_to(prior.weights @ prior.means, (yb.shape[0], prior.n)).copy()
        return out[0] if single else out
    logev, cond = [], []
    for mu, cov, w in zip(prior.means, prior.covariances, prior.weights):
        ac = A @ cov
        s = ac @ A.T + sigma**2 * np.eye(m)
        try:
            chol = linalg.cho_factor(s, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularEvidenceError("evidence covariance A S A^T + sigma^2 I is singular") from exc
        if np.diag(chol[0]).min() <= 1e-12 * np.sqrt(np.abs(s).max()):
            raise SingularEvidenceError("evidence covariance is numerically singular")
        r = yb - mu @ A.T  # (B, m)
        sol = linalg.cho_solve(chol, r.T).T
        logdet = 2 * np.log(np.diag(chol[0])).sum()
        logev.append(np.log(w) - 0.5 * (np.einsum("bi,bi->b", r, sol) + logdet))
        cond.append(mu + sol @ ac)
    logev = np.stack(logev)  # (K, B)
    resp = np.exp(logev - logsumexp(logev, axis=0, keepdims=True))
    out = np.einsum("kb,kbn->bn", resp, np.stack(cond))
    return out[0] if single else out


def map_gaussian(mean, cov, y, A, sigma: float) -> np.ndarray:
    """argmin ||Ax - y||^2 / (2 sigma^2) + (x - mu)^T cov^{-1} (x - mu) / 2."""
    if sigma <= 0:
        raise ValueError("MAP oracle needs sigma > 0")
    A = np.asarray(A, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    try:
        cov_chol = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    prec = linalg.cho_solve(cov_chol, np.eye(len(mean)))
    hess = A.T @ A / sigma**2 + prec
    rhs = np.asarray(y) @ A / sigma**2 + prec @ mean
    return linalg.cho_solve(linalg.cho_factor(hess, lower=True), np.atleast_2d(rhs).T).T.reshape(np.shape(rhs))


def invariant_gaussian(mean, cov, action: GroupAction):
    """Group-averaged mean and covariance, so that N(mean, cov) is invariant."""
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    mu = np.mean([mean[p] for p in action.perms], axis=0)
    return mu, np.mean([cov[np.ix_(p, p)] for p in action.perms], axis=0)
