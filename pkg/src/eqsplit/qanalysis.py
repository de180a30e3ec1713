"""Identifiability matrices of the equivariant splitting loss.

For a fixed operator A, a finite group and an enumerable split rule, the
training pairs are (y1, A1) with A1 = M A T_g.  Conditioning on the value of
A1 gives ``Q_{A1} = E[(A T_g)^T A T_g | A1]``; its rank decides whether the
splitting minimizer is pinned down in every direction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .group import GroupAction, apply
from .operators import SplitRule, as_matrix, draw_rows, enumerate_splits, virtual_matrix

RANK_RTOL = 1e-10
MAX_PAIRS = 1_000_000


class SingularAggregationError(np.linalg.LinAlgError):
    pass


def canonical_order(A1: np.ndarray) -> np.ndarray:
    """Row order sorting A1 lexicographically (first column most significant)."""
    A1 = np.asarray(A1, dtype=np.float64)
    if A1.shape[0] <= 1:
        return np.arange(A1.shape[0])
    return np.lexsort(A1.T[::-1])


def canonical_key(A1: np.ndarray, y1=None) -> bytes:
    """Exact byte key of the row-sorted split operator (and optionally y1)."""
    A1 = np.asarray(A1, dtype=np.float64)
    order = canonical_order(A1)
    key = np.array(A1.shape, dtype=np.int64).tobytes() + np.ascontiguousarray(A1[order]).tobytes()
    if y1 is not None:
        key += b"|" + np.ascontiguousarray(np.asarray(y1, dtype=np.float64)[order]).tobytes()
    return key


@dataclass
class SupportPoint:
    g: int
    rows: tuple[int, ...]
    prob: float
    A1: np.ndarray
    key: bytes


def enumerate_support(A, action: GroupAction, rule: SplitRule) -> list[SupportPoint]:
    """Joint support of (g, M) with g uniform and M drawn against A T_g."""
    A = as_matrix(A)
    splits = enumerate_splits(rule, A.shape[0])
    if action.order * len(splits) > MAX_PAIRS:
        raise ValueError(f"{action.order * len(splits)} (g, M) pairs exceed the enumeration cap")
    out = []
    for g in range(action.order):
        Ag = virtual_matrix(A, action, g)
        for rows, p in splits:
            A1 = Ag[list(rows)]
            out.append(SupportPoint(g, rows, p / action.order, A1, canonical_key(A1)))
    return out


@dataclass
class QReport:
    q: np.ndarray
    rank: int
    nullspace_basis: np.ndarray
    min_eigenvalue: float
    eigenvalues: np.ndarray
    conditional_support: list[tuple[int, float]] = field(default_factory=list)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.q.shape[0]

    def write_csv(self, path, verdict: str = "") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "rank", "n", "verdict"])
            for i, ev in enumerate(self.eigenvalues):
                w.writerow([i, repr(float(ev)), self.rank, self.q.shape[0], verdict])


def make_report(q: np.ndarray, support=()) -> QReport:
    q = 0.5 * (q + q.T)
    evals, evecs = np.linalg.eigh(q)
    top = max(abs(evals).max(), 0.0)
    keep = evals >= RANK_RTOL * top if top > 0 else np.zeros_like(evals, dtype=bool)
    return QReport(q, int(keep.sum()), evecs[:, ~keep], float(evals[0]), evals, list(support))


def _gram_virtual(A, action, g):
    Ag = virtual_matrix(A, action, g)
    return Ag.T @ Ag


def q_reports(A, action: GroupAction, rule: SplitRule) -> dict[bytes, tuple[float, QReport]]:
    """Every reachable A1 key mapped to (p(A1), Q_{A1} report)."""
    A = as_matrix(A)
    grams = [_gram_virtual(A, action, g) for g in range(action.order)]
    groups: dict[bytes, dict[int, float]] = {}
    for pt in enumerate_support(A, action, rule):
        cond = groups.setdefault(pt.key, {})
        cond[pt.g] = cond.get(pt.g, 0.0) + pt.prob
    out = {}
    for key, cond in groups.items():
        total = sum(cond.values())
        support = sorted((g, p / total) for g, p in cond.items())
        q = sum(p * grams[g] for g, p in support)
        out[key] = (total, make_report(q, support))
    return out


def q_matrix(A, action: GroupAction, rule: SplitRule, a1_key) -> QReport:
    """Q_{A1} for one split operator, given as its matrix or canonical key."""
    key = a1_key if isinstance(a1_key, bytes) else canonical_key(a1_key)
    reports = q_reports(A, action, rule)
    if key not in reports:
        raise KeyError("split operator is not in the enumerated support")
    return reports[key][1]


def direct_splits(A, rule: SplitRule):
    """Splits of the actual operator: (rows, prob, A1 key)."""
    A = as_matrix(A)
    return [(rows, p, canonical_key(A[list(rows)])) for rows, p in enumerate_splits(rule, A.shape[0])]


def q_bar(A, action: GroupAction, rule: SplitRule) -> QReport:
    """Average of Q_{A1} over splits A1 of A itself."""
    A = as_matrix(A)
    reports = q_reports(A, action, rule)
    q = np.zeros((A.shape[1], A.shape[1]))
    for rows, p, key in direct_splits(A, rule):
        q += p * reports[key][1].q
    return make_report(q)


@dataclass
class EquivarianceVerdict:
    equivariant_elements: list[int]
    violations: np.ndarray
    test: str
    verdict: str


def check_not_equivariant(A, action: GroupAction) -> EquivarianceVerdict:
    """Per-element test of the rank obstruction.

    Square A is tested for commutation A T_g = T_g A; otherwise for A T_g = A.
    The verdict is "obstructed" when every element passes.
    """
    A = as_matrix(A)
    square = A.shape[0] == A.shape[1] == action.n
    viol = np.empty(action.order)
    for g in range(action.order):
        Ag = virtual_matrix(A, action, g)
        other = apply(action, g, A.T).T if square else A
        viol[g] = np.abs(Ag - other).max() if A.size else 0.0
    elems = [int(g) for g in np.flatnonzero(viol == 0.0)]
    verdict = "obstructed" if len(elems) == action.order else "not-obstructed"
    return EquivarianceVerdict(elems, viol, "commutation" if square else "fixing", verdict)


def aggregation_weights(A, action: GroupAction, rule: SplitRule):
    """List of (rows, prob, Qbar^{-1} Q_{A1}) over splits of A."""
    A = as_matrix(A)
    reports = q_reports(A, action, rule)
    splits = direct_splits(A, rule)
    qb = sum(p * reports[key][1].q for _, p, key in splits)
    rep = make_report(qb)
    if not rep.full_rank:
        raise SingularAggregationError(f"Qbar has rank {rep.rank} < {A.shape[1]}")
    qb_inv = np.linalg.inv(qb)
    return [(rows, p, qb_inv @ reports[key][1].q) for rows, p, key in splits]


def weighted_aggregate(f, y, A, action: GroupAction, rule: SplitRule) -> np.ndarray:
    """E over splits (y1, A1) of (y, A) of Qbar^{-1} Q_{A1} f(y1, A1)."""
    A = as_matrix(A)
    y = np.asarray(y, dtype=np.float64)
    out = 0.0
    for rows, p, w in aggregation_weights(A, action, rule):
        r = list(rows)
        out = out + p * (f(y[..., r], A[r]) @ w.T)
    return out


def test_time_average(f, y, A, action: GroupAction, rule: SplitRule, J: int, seed=None) -> np.ndarray:
    """Unweighted average of T_g f(y1, A1) over J random (g, split) draws."""
    if J < 1:
        raise ValueError("J must be at least 1")
    A = as_matrix(A)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(J):
        g = action.random_element(rng)
        Ag = virtual_matrix(A, action, g)
        rows = draw_rows(rule, A.shape[0], rng)
        total = total + apply(action, g, f(y[..., rows], Ag[rows]))
    return total / J
