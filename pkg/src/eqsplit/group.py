"""Finite groups of grid-preserving transforms acting on row-major image vectors.

Every group here is permutation-backed: element ``g`` is stored as an index
array ``perm`` with ``(T_g x)[i] = x[perm[i]]``.  Matrices are materialized
only on request, so composition and inverse identities can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GroupAction:
    """A finite group acting on R^n by permutation matrices.

    ``compose_table[g, h]`` is the index of the element with
    ``T_g T_h = T_{compose(g, h)}``.
    """

    perms: np.ndarray
    compose_table: np.ndarray
    inverse_table: np.ndarray
    identity: int
    names: tuple[str, ...] = ()
    shape: tuple[int, int] | None = None
    label: str = ""

    @property
    def n(self) -> int:
        return int(self.perms.shape[1])

    @property
    def order(self) -> int:
        return int(self.perms.shape[0])

    @classmethod
    def from_permutations(cls, perms, names=(), shape=None, label="", tables=None) -> "GroupAction":
        """Build the tables by lookup.  ``tables=(compose, inverse)`` skips the
        search for large groups whose tables are known in closed form."""
        perms = np.ascontiguousarray(np.asarray(perms, dtype=np.int64))
        if perms.ndim != 2 or perms.shape[0] == 0:
            raise ValueError("perms must be a non-empty (order, n) array")
        order, n = perms.shape
        lookup = {p.tobytes(): i for i, p in enumerate(perms)}
        if len(lookup) != order:
            raise ValueError("duplicate group elements")
        ident = lookup.get(np.arange(n, dtype=np.int64).tobytes())
        if ident is None:
            raise ValueError("identity permutation missing")
        if tables is not None:
            compose = np.ascontiguousarray(tables[0], dtype=np.int64)
            inverse = np.ascontiguousarray(tables[1], dtype=np.int64)
        else:
            compose = np.empty((order, order), dtype=np.int64)
            for g in range(order):
                for h in range(order):
                    key = perms[h][perms[g]].tobytes()
                    if key not in lookup:
                        raise ValueError(f"set not closed: {g}*{h} not an element")
                    compose[g, h] = lookup[key]
            inverse = np.array([lookup[np.argsort(p).astype(np.int64).tobytes()] for p in perms])
        for arr in (perms, compose, inverse):
            arr.setflags(write=False)
        return cls(perms, compose, inverse, int(ident), tuple(names), shape, label)

    def compose(self, g: int, h: int) -> int:
        return int(self.compose_table[g, h])

    def inverse(self, g: int) -> int:
        return int(self.inverse_table[g])

    def matrix(self, g: int) -> np.ndarray:
        """Dense n x n matrix of T_g."""
        t = np.zeros((self.n, self.n))
        t[np.arange(self.n), self.perms[g]] = 1.0
        return t

    @property
    def transforms(self) -> list[np.ndarray]:
        return [self.matrix(g) for g in range(self.order)]

    def apply(self, g: int, x: np.ndarray) -> np.ndarray:
        return apply(self, g, x)

    def random_element(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.order))


def _checked_element(action: GroupAction, g) -> int:
    g = int(g)
    if not 0 <= g < action.order:
        raise IndexError(f"element {g} outside group of order {action.order}")
    return g


def apply(action: GroupAction, g: int, x: np.ndarray) -> np.ndarray:
    """Return T_g x; ``x`` may carry leading batch axes."""
    x = np.asarray(x)
    if x.shape[-1] != action.n:
        raise ValueError(f"expected last axis {action.n}, got {x.shape[-1]}")
    return x[..., action.perms[_checked_element(action, g)]]


def apply_inverse(action: GroupAction, g: int, x: np.ndarray) -> np.ndarray:
    return apply(action, action.inverse(_checked_element(action, g)), x)


def build_shift_group(width: int, height: int = 1) -> GroupAction:
    """Cyclic translations of a height x width image (1-D when height == 1).

    Element ``dy * width + dx`` maps pixel (r, c) to ((r + dy) % H, (c + dx) % W).
    """
    if width < 1 or height < 1:
        raise ValueError("shift group needs positive width and height")
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    perms, names = [], []
    for dy in range(height):
        for dx in range(width):
            src = ((rows - dy) % height) * width + (cols - dx) % width
            perms.append(src.ravel())
            names.append(f"shift({dx},{dy})")
    dy, dx = np.divmod(np.arange(height * width), width)
    compose = ((dy[:, None] + dy[None, :]) % height) * width + (dx[:, None] + dx[None, :]) % width
    inverse = ((-dy) % height) * width + (-dx) % width
    return GroupAction.from_permutations(
        perms, names, (height, width), f"shift:{height}x{width}", tables=(compose, inverse)
    )


def _dihedral_ops():
    # clockwise quarter turns, then the same turns after a horizontal flip
    ops = []
    for flip in (False, True):
        for k in range(4):
            ops.append((flip, k))
    return ops


def build_dihedral_group(side: int, height: int | None = None) -> GroupAction:
    """Order-8 group of 90 degree rotations and flips of a side x side image."""
    if height is not None and height != side:
        raise ValueError("dihedral group requires a square image")
    if side < 1:
        raise ValueError("side must be positive")
    idx = np.arange(side * side).reshape(side, side)
    perms, names, seen = [], [], set()
    for flip, k in _dihedral_ops():
        img = idx[:, ::-1] if flip else idx
        perm = np.rot90(img, -k).ravel()
        name = f"rot{90 * k}" + ("*hflip" if flip else "")
        # side 1 collapses everything to the identity
        if perm.tobytes() in seen:
            continue
        seen.add(perm.tobytes())
        perms.append(perm)
        names.append(name)
    return GroupAction.from_permutations(perms, names, (side, side), f"dihedral:{side}")


def build_trivial_group(n: int) -> GroupAction:
    return GroupAction.from_permutations([np.arange(n)], ["identity"], (1, n), f"trivial:{n}")


def parse_group_spec(spec: str) -> GroupAction:
    """Build a group from text such as ``shift:28x28``, ``shift:16``,
    ``dihedral:8`` or ``trivial:64``."""
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ValueError(f"group spec {spec!r} is missing its size")
    if "x" in arg:
        h, w = (int(v) for v in arg.split("x"))
    else:
        h, w = 1, int(arg)
    if kind == "shift":
        return build_shift_group(w, h)
    if kind == "dihedral":
        return build_dihedral_group(w, None if h == 1 else h)
    if kind == "trivial":
        return build_trivial_group(h * w)
    raise ValueError(f"unknown group kind {kind!r}")


@dataclass
class AxiomReport:
    closure_error: float
    identity_error: float
    inverse_error: float
    orthogonality_error: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "closure": self.closure_error,
            "identity": self.identity_error,
            "inverse": self.inverse_error,
            "orthogonality": self.orthogonality_error,
        }


def check_group_axioms(action: GroupAction, dense: bool | None = None) -> AxiomReport:
    """Check closure, identity, inverse and orthogonality; errors are max-abs
    matrix entry differences.  ``dense`` forces the matrix route (default for
    n <= 64), otherwise the equivalent exact permutation route is used."""
    order, n = action.order, action.n
    if dense is None:
        dense = n <= 64 and order <= 64
    eye = np.arange(n)

    def perm_err(p, q):
        return 0.0 if np.array_equal(p, q) else 1.0

    if dense:
        mats = action.transforms
        closure = max(
            np.abs(mats[g] @ mats[h] - mats[action.compose_table[g, h]]).max()
            for g in range(order) for h in range(order)
        )
        ident = np.abs(mats[action.identity] - np.eye(n)).max()
        inv = max(np.abs(mats[g] @ mats[action.inverse_table[g]] - np.eye(n)).max() for g in range(order))
        orth = max(np.abs(m.T @ m - np.eye(n)).max() for m in mats)
    else:
        p = action.perms
        closure = max(
            perm_err(p[h][p[g]], p[action.compose_table[g, h]])
            for g in range(order) for h in range(order)
        )
        ident = perm_err(p[action.identity], eye)
        inv = max(perm_err(p[action.inverse_table[g]][p[g]], eye) for g in range(order))
        orth = max(perm_err(np.sort(q), eye) for q in p)
    errors = dict(closure=closure, identity=ident, inverse=inv, orthogonality=orth)
    inv_tab = action.inverse_table
    if not np.array_equal(inv_tab[inv_tab], np.arange(order)):
        errors["inverse"] = max(errors["inverse"], 1.0)
    failures = [k for k, v in errors.items() if v > 1e-12]
    return AxiomReport(
        float(closure), float(ident), float(errors["inverse"]), float(orth), failures
    )
