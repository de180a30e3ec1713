"""Forward operators, measurement simulation, virtual operators and splits."""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .group import GroupAction

ROW_MASK = "row-mask"
DENSE = "dense"
DFT = "subsampled-dft-real"
KINDS = (ROW_MASK, DENSE, DFT)

BERNOULLI = "bernoulli-rows"
FIXED = "fixed-partition"

MAX_ENUMERATED_ROWS = 20


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    kind: str
    matrix: np.ndarray
    selection: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        mat = np.array(self.matrix, dtype=np.float64, order="C")
        if mat.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if self.selection is not None:
            sel = np.array(self.selection, dtype=np.int64)
            sel.setflags(write=False)
            object.__setattr__(self, "selection", sel)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.matrix.T

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.matrix


def as_matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, ForwardOperator) else np.asarray(op, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Measurement:
    y: np.ndarray
    operator: ForwardOperator
    sigma: float = 0.0
    seed: int | None = None


def make_inpainting(n: int, keep_mask) -> ForwardOperator:
    """Row-mask operator keeping the coordinates where ``keep_mask`` is true."""
    keep = np.asarray(keep_mask, dtype=bool).ravel()
    if keep.size != n:
        raise ValueError(f"mask has {keep.size} entries, expected {n}")
    sel = np.flatnonzero(keep)
    if sel.size == 0:
        raise ValueError("inpainting mask keeps no pixel")
    return _mask_operator(sel, n)


def _mask_operator(selection, n: int) -> ForwardOperator:
    mat = np.zeros((len(selection), n))
    mat[np.arange(len(selection)), selection] = 1.0
    return ForwardOperator(ROW_MASK, mat, selection)


def bernoulli_mask(n: int, keep_prob: float, seed) -> np.ndarray:
    return np.random.default_rng(seed).random(n) < keep_prob


def make_gaussian_cs(m: int, n: int, seed) -> ForwardOperator:
    """Dense i.i.d. N(0, 1/m) sensing matrix."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return ForwardOperator(DENSE, rng.standard_normal((m, n)) / np.sqrt(m))


def compression_rows(n: int, compression_percent: float) -> int:
    """Number of rows kept at a compression level (90 keeps 10% of n)."""
    return max(1, int(round(n * (100.0 - compression_percent) / 100.0)))


def make_subsampled_dft(side: int, freq_mask) -> ForwardOperator:
    """Real (Re, Im) row pairs of the unitary 2-D DFT at the selected frequencies.

    Rows are scaled by 1/side, so the full mask yields A^T A = I.
    """
    mask = np.asarray(freq_mask, dtype=bool)
    if mask.shape != (side, side):
        raise ValueError(f"frequency mask must be {side}x{side}")
    freqs = np.argwhere(mask)
    if len(freqs) == 0:
        raise ValueError("no frequency selected")
    r = np.arange(side)
    rows, cols = np.meshgrid(r, r, indexing="ij")
    out = np.empty((2 * len(freqs), side * side))
    for i, (ky, kx) in enumerate(freqs):
        phase = -2.0 * np.pi * (ky * rows + kx * cols) / side
        out[2 * i] = np.cos(phase).ravel() / side
        out[2 * i + 1] = np.sin(phase).ravel() / side
    return ForwardOperator(DFT, out, None)


def simulate(x, op: ForwardOperator, sigma: float = 0.0, seed=None) -> Measurement:
    """y = A x + sigma w with w ~ N(0, I); ``x`` may be a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != op.n:
        raise ValueError(f"signal has dimension {x.shape[-1]}, operator expects {op.n}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    y = op(x)
    if sigma > 0:
        y = y + sigma * np.random.default_rng(seed).standard_normal(y.shape)
    return Measurement(y, op, float(sigma), seed)


def virtual_operator(op, action: GroupAction, g: int) -> ForwardOperator:
    """Return A T_g.  Row masks stay row masks with permuted selections."""
    if not isinstance(op, ForwardOperator):
        op = ForwardOperator(DENSE, op)
    if op.n != action.n:
        raise ValueError(f"operator acts on {op.n} dims, group on {action.n}")
    perm = action.perms[g]
    if op.kind == ROW_MASK:
        return _mask_operator(perm[op.selection], op.n)
    inv = action.perms[action.inverse(g)]
    kind = op.kind if g == action.identity else DENSE
    return ForwardOperator(kind, op.matrix[:, inv], op.selection)


def virtual_matrix(A: np.ndarray, action: GroupAction, g: int) -> np.ndarray:
    """Column-permuted A T_g as a plain array."""
    return np.asarray(A)[:, action.perms[action.inverse(g)]]


@dataclass(frozen=True)
class SplitRule:
    family: str
    keep_prob: float = 0.5
    partitions: tuple[tuple[int, ...], ...] | None = None
    weights: tuple[float, ...] | None = None
    min_rows: int = 1

    def __post_init__(self):
        if self.family == BERNOULLI:
            if not 0.0 < self.keep_prob < 1.0:
                raise ValueError("keep_prob must lie in (0, 1)")
        elif self.family == FIXED:
            if not self.partitions:
                raise ValueError("fixed-partition rule needs at least one partition")
            parts = tuple(tuple(sorted(int(r) for r in p)) for p in self.partitions)
            object.__setattr__(self, "partitions", parts)
            if self.weights is not None:
                w = np.asarray(self.weights, dtype=float)
                if len(w) != len(parts) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                    raise ValueError("partition weights must be a probability vector")
        else:
            raise ValueError(f"unknown split family {self.family!r}")
        if self.min_rows < 0:
            raise ValueError("min_rows must be non-negative")

    @classmethod
    def bernoulli(cls, keep_prob: float, min_rows: int = 1) -> "SplitRule":
        return cls(BERNOULLI, keep_prob=keep_prob, min_rows=min_rows)

    @classmethod
    def fixed(cls, partitions, weights=None, min_rows: int = 0) -> "SplitRule":
        return cls(FIXED, partitions=tuple(partitions), weights=weights, min_rows=min_rows)

    @classmethod
    def full(cls, m: int) -> "SplitRule":
        """Degenerate rule whose only split keeps every row."""
        return cls.fixed([tuple(range(m))])

    def validate(self, m: int) -> None:
        if self.min_rows > m:
            raise ValueError(f"min_rows={self.min_rows} exceeds the {m} available rows")
        if self.family == FIXED:
            for part in self.partitions:
                if len(set(part)) != len(part) or any(not 0 <= r < m for r in part):
                    raise ValueError(f"partition {part} is not a row subset of {m} rows")
                if len(part) < self.min_rows:
                    raise ValueError(f"partition {part} has fewer than min_rows rows")


def draw_rows(rule: SplitRule, m: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted row indices of y1 drawn from ``rule``."""
    rule.validate(m)
    if rule.family == FIXED:
        k = rng.choice(len(rule.partitions), p=rule.weights) if len(rule.partitions) > 1 else 0
        return np.array(rule.partitions[k], dtype=np.int64)
    for _ in range(10_000):
        keep = rng.random(m) < rule.keep_prob
        if keep.sum() >= rule.min_rows:
            return np.flatnonzero(keep)
    raise RuntimeError("could not draw a split with enough rows; lower min_rows")


def enumerate_splits(rule: SplitRule, m: int) -> list[tuple[tuple[int, ...], float]]:
    """Full support of the split distribution as (rows of y1, probability)."""
    rule.validate(m)
    if rule.family == FIXED:
        k = len(rule.partitions)
        w = rule.weights if rule.weights is not None else (1.0 / k,) * k
        merged: dict[tuple[int, ...], float] = {}
        for part, p in zip(rule.partitions, w):
            merged[part] = merged.get(part, 0.0) + float(p)
        return list(merged.items())
    if m > MAX_ENUMERATED_ROWS:
        raise ValueError(f"refusing to enumerate 2^{m} Bernoulli splits")
    p = rule.keep_prob
    out = []
    for size in range(rule.min_rows, m + 1):
        for rows in itertools.combinations(range(m), size):
            out.append((rows, p**size * (1 - p) ** (m - size)))
    total = sum(q for _, q in out)
    return [(rows, q / total) for rows, q in out]


@dataclass(frozen=True, eq=False)
class SplitSample:
    rows1: np.ndarray
    rows2: np.ndarray
    y1: np.ndarray
    A1: np.ndarray
    y2: np.ndarray
    A2: np.ndarray
    m: int
    g: int | None = None

    @property
    def M(self) -> np.ndarray:
        sel = np.zeros((len(self.rows1), self.m))
        sel[np.arange(len(self.rows1)), self.rows1] = 1.0
        return sel

    @property
    def permutation(self) -> np.ndarray:
        """Row order p with stack(y1, y2) == y[p]."""
        return np.concatenate([self.rows1, self.rows2])


def split_from_rows(y, A, rows1, g=None) -> SplitSample:
    A = as_matrix(A)
    y = np.asarray(y, dtype=np.float64)
    m = A.shape[0]
    rows1 = np.asarray(rows1, dtype=np.int64)
    mask = np.zeros(m, dtype=bool)
    mask[rows1] = True
    rows2 = np.flatnonzero(~mask)
    return SplitSample(rows1, rows2, y[..., rows1], A[rows1], y[..., rows2], A[rows2], m, g)


def sample_split(rule: SplitRule, meas, op=None, seed=None, g=None) -> SplitSample:
    """Draw one split of (y, A).  ``meas`` is a Measurement or a raw y."""
    y = meas.y if isinstance(meas, Measurement) else np.asarray(meas)
    if op is None:
        op = meas.operator
    A = as_matrix(op)
    if y.shape[-1] != A.shape[0]:
        raise ValueError("measurement length does not match operator rows")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return split_from_rows(y, A, draw_rows(rule, A.shape[0], rng), g)


# --- binary container ---------------------------------------------------

_OP_MAGIC = b"EQOP"
_KIND_CODES = {ROW_MASK: 0, DENSE: 1, DFT: 2}
_HEADER = struct.Struct("<4sIQQQ")


class OperatorFormatError(ValueError):
    pass


def save_operator(path, op: ForwardOperator) -> None:
    """Layout (little-endian): magic "EQOP", u32 kind code, u64 m, u64 n,
    u64 selection count, m*n f64 row-major matrix, count i64 selection."""
    sel = op.selection if op.selection is not None else np.zeros(0, dtype=np.int64)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_OP_MAGIC, _KIND_CODES[op.kind], op.m, op.n, len(sel)))
        fh.write(op.matrix.astype("<f8").tobytes())
        fh.write(np.asarray(sel, dtype="<i8").tobytes())


def load_operator(path) -> ForwardOperator:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise OperatorFormatError("file shorter than the operator header")
    magic, code, m, n, count = _HEADER.unpack_from(data)
    if magic != _OP_MAGIC:
        raise OperatorFormatError(f"bad magic {magic!r}")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise OperatorFormatError(f"unknown kind code {code}")
    need = _HEADER.size + 8 * m * n + 8 * count
    if len(data) != need:
        raise OperatorFormatError(f"expected {need} bytes, found {len(data)}")
    off = _HEADER.size
    mat = np.frombuffer(data, dtype="<f8", count=m * n, offset=off).reshape(m, n)
    sel = np.frombuffer(data, dtype="<i8", count=count, offset=off + 8 * m * n)
    return ForwardOperator(kinds[code], mat.astype(np.float64), sel.astype(np.int64) if count else None)
