"""Halfspace polytopes, boxes, Pontryagin subtraction and a small dense LP.

The LP solver is a two-phase tableau simplex applied to the dual of
``max c'z s.t. Hz <= h`` (free ``z``), which turns the problem into the
standard form ``min h'y s.t. H'y = c, y >= 0``.  Bland's rule is used for
every pivot so the solver is deterministic and cannot cycle.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyPolytope, Infeasible, Unbounded

MEMBER_TOL = 1e-9
REDUNDANT_TOL = 1e-9
_PIVOT_TOL = 1e-11


# -- simplex ------------------------------------------------------------------


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T, basis, n_enter, tol):
    """Bland-rule simplex on tableau T (last row = reduced costs, last col = rhs)."""
    m = T.shape[0] - 1
    for _ in range(50000):
        rc = T[m, :n_enter]
        cand = np.flatnonzero(rc < -tol)
        if cand.size == 0:
            return "optimal"
        j = int(cand[0])
        col = T[:m, j]
        pos = col > tol
        if not np.any(pos):
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, j)
        basis[r] = j
    raise RuntimeError("simplex iteration cap reached")


def simplex_standard(A, b, cost, tol=_PIVOT_TOL):
    """Solve ``min cost'y s.t. A y = b, y >= 0``.

    Returns
    -------
    status : str
        ``"optimal"``, ``"infeasible"`` or ``"unbounded"``.
    y : ndarray or None
    basis : list of int
        Basic column per retained equality row.
    kept : ndarray of int
        Indices of equality rows that were not found linearly dependent.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, N = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :N] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(N, N + m))
    _run(T, basis, N, tol)
    if -T[m, -1] > 1e-9 * max(1.0, float(b.sum())):
        return "infeasible", None, basis, np.arange(m)
    keep = []
    for i in range(m):
        if basis[i] >= N:
            row = np.abs(T[i, :N])
            cand = np.flatnonzero(row > 1e-9)
            if cand.size:
                _pivot(T, i, int(cand[0]))
                basis[i] = int(cand[0])
                keep.append(i)
        else:
            keep.append(i)
    keep = np.asarray(keep, dtype=int)
    T = np.vstack([T[keep], T[m:m + 1]])
    T = np.delete(T, np.s_[N:N + m], axis=1)
    basis = [basis[i] for i in keep]
    k = len(keep)
    cb = cost[basis]
    T[k, :N] = cost - cb @ T[:k, :N]
    T[k, -1] = -cb @ T[:k, -1]
    status = _run(T, basis, N, tol)
    if status == "unbounded":
        return status, None, basis, keep
    y = np.zeros(N)
    y[basis] = T[:k, -1]
    return "optimal", y, basis, keep


def lp_max(c, P: "Polytope"):
    """Maximize ``c'z`` over ``P``.

    Returns
    -------
    (float, ndarray)
        Optimal value and a maximizer.

    Raises
    ------
    Unbounded, Infeasible
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    H, h = P.H, P.h
    if c.size != P.dim:
        raise DimensionMismatch(f"objective has {c.size} entries, polytope dim {P.dim}")
    if H.shape[0] == 0:
        if np.any(c != 0):
            raise Unbounded("no constraints")
        return 0.0, np.zeros(P.dim)
    status, y, basis, keep = simplex_standard(H.T, c, h)
    if status == "unbounded":
        raise Infeasible("polytope is empty")
    if status == "infeasible":
        if not _feasible(P):
            raise Infeasible("polytope is empty")
        raise Unbounded("objective unbounded over polytope")
    value = float(h @ y)
    z = np.zeros(P.dim)
    Hb = H[np.asarray(basis)][:, keep]
    z[keep] = np.linalg.lstsq(Hb, h[np.asarray(basis)], rcond=None)[0]
    return value, z


def _feasible(P) -> bool:
    status, _, _, _ = simplex_standard(P.H.T, np.zeros(P.dim), P.h)
    return status == "optimal"


# -- sets ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polytope:
    """The set ``{z : H z <= h}``."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        h = np.array(self.h, dtype=float).reshape(-1)
        if H.ndim == 1:
            H = H.reshape(h.size, -1) if h.size else H.reshape(0, H.size)
        if H.shape[0] != h.size:
            raise DimensionMismatch(f"H has {H.shape[0]} rows, h has {h.size}")
        if np.isnan(H).any() or np.isnan(h).any():
            raise ValueError("NaN in polytope data")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def nrows(self) -> int:
        return self.H.shape[0]

    def contains(self, z, tol=MEMBER_TOL):
        """Membership test; ``z`` may be one point or an (N, dim) batch."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatch(f"point dim {z.shape[-1]} != {self.dim}")
        return np.all(z @ self.H.T <= self.h + tol, axis=-1)

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise DimensionMismatch("dimension mismatch in intersection")
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def is_empty(self) -> bool:
        if self.nrows == 0:
            return False
        return not _feasible(self)

    def support(self, c) -> float:
        return lp_max(c, self)[0]

    def bounding_box(self) -> "Box":
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            hi[i] = _support_or_inf(e, self)
            lo[i] = -_support_or_inf(-e, self)
        return Box(lo, hi)

    def to_text(self) -> str:
        buf = io.StringIO()
        for row, b in zip(self.H, self.h):
            buf.write(" ".join(f"{v:.17g}" for v in row) + " | " + f"{b:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, dim: int | None = None) -> "Polytope":
        rows, rhs = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            left, right = line.split("|")
            rows.append([float(v) for v in left.split()])
            rhs.append(float(right))
        if not rows:
            return cls(np.zeros((0, dim or 0)), np.zeros(0))
        return cls(np.array(rows), np.array(rhs))


def _support_or_inf(c, P):
    try:
        return lp_max(c, P)[0]
    except Unbounded:
        return np.inf


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box; bounds may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatch("lower and upper bounds differ in length")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, half):
        half = np.atleast_1d(np.asarray(half, dtype=float))
        return cls(-half, half)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def halfwidth(self):
        return 0.5 * (self.upper - self.lower)

    def contains(self, z, tol=MEMBER_TOL):
        z = np.asarray(z, dtype=float)
        return np.all((z >= self.lower - tol) & (z <= self.upper + tol), axis=-1)

    def contains_origin_interior(self) -> bool:
        return bool(np.all(self.lower < 0) and np.all(self.upper > 0))

    def scaled(self, factor: float) -> "Box":
        return Box(self.lower * factor, self.upper * factor)

    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def vertices(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def to_polytope(self) -> Polytope:
        n = self.dim
        I = np.eye(n)
        up = np.isfinite(self.upper)
        lo = np.isfinite(self.lower)
        H = np.vstack([I[up], -I[lo]])
        h = np.concatenate([self.upper[up], -self.lower[lo]])
        return Polytope(H.reshape(-1, n), h)

    def image_support(self, M) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise (max, min) of ``M w`` over the box (requires finite bounds)."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != self.dim:
            raise DimensionMismatch("matrix width differs from box dimension")
        c = M @ self.center
        r = np.abs(M) @ self.halfwidth
        return c + r, c - r

    def p_subtract(self, M, W: "Box") -> "Box":
        """``self ~ M W`` for a box ``self`` (infinite bounds stay infinite)."""
        hi, lo = W.image_support(M)
        return Box(self.lower - lo, self.upper - hi)


def p_subtract(P: Polytope, M, W: Box) -> Polytope:
    """Pontryagin difference ``P ~ M W`` for a box ``W``.

    Raises
    ------
    EmptyPolytope
        If some bound becomes infinite-negative (the result is empty).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != W.dim:
        raise DimensionMismatch("column count of M differs from dim(W)")
    if M.shape[0] != P.dim:
        raise DimensionMismatch("row count of M differs from dim(P)")
    if not W.is_bounded:
        raise EmptyPolytope("subtraction of an unbounded set")
    HM = P.H @ M
    c = HM @ W.center
    with np.errstate(invalid="ignore"):
        r = np.where(HM == 0.0, 0.0, np.abs(HM) * W.halfwidth).sum(axis=1)
    h = P.h - (c + r)
    if np.any(np.isneginf(h)) or np.any(np.isnan(h)):
        raise EmptyPolytope("subtraction of an unbounded set")
    return Polytope(P.H, h)


def p_subtract_vertices(P: Polytope, M, vertices) -> Polytope:
    """Pontryagin difference against the convex hull of ``vertices`` (rows)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    s = (P.H @ M @ V.T).max(axis=1)
    return Polytope(P.H, P.h - s)


def normalize_rows(P: Polytope) -> Polytope:
    """Scale rows to unit norm; drop all-zero rows (``EmptyPolytope`` if one is violated)."""
    nrm = np.linalg.norm(P.H, axis=1)
    zero = nrm <= 1e-14
    if np.any(P.h[zero] < -REDUNDANT_TOL):
        raise EmptyPolytope("a constant row is violated")
    keep = ~zero
    return Polytope(P.H[keep] / nrm[keep, None], P.h[keep] / nrm[keep])


def remove_redundant(P: Polytope, tol=REDUNDANT_TOL) -> Polytope:
    """Minimal row representation of the same set.

    Raises
    ------
    EmptyPolytope
    """
    Q = normalize_rows(P)
    if Q.nrows and Q.is_empty():
        raise EmptyPolytope("polytope is empty")
    H, h = Q.H, Q.h
    # exact duplicates first; keep the tightest copy
    order = np.lexsort(np.vstack([h, np.round(H, 12).T[::-1]]))
    keep = []
    last = None
    for i in order:
        key = tuple(np.round(H[i], 12))
        if key == last:
            continue
        keep.append(i)
        last = key
    keep = sorted(keep)
    active = list(keep)
    for i in keep:
        others = [k for k in active if k != i]
        if not others:
            continue
        sub = Polytope(H[others], h[others])
        try:
            val, _ = lp_max(H[i], sub)
        except Unbounded:
            continue
        if val <= h[i] + tol:
            active = others
    return Polytope(H[active], h[active])


def redundant_against(P: Polytope, g, b, tol=REDUNDANT_TOL) -> tuple[bool, float]:
    """Is ``g'z <= b`` implied by ``P``?  Returns (flag, support - b)."""
    try:
        val, _ = lp_max(g, P)
    except Unbounded:
        return False, np.inf
    return val <= b + tol, val - b


def volume_mc(P: Polytope, bounding: Box, samples=10**6, seed=0, chunk=200000) -> float:
    """Monte Carlo volume: hit fraction times the bounding-box volume."""
    if not bounding.is_bounded:
        raise ValueError("bounding box must be finite")
    rng = np.random.default_rng(seed)
    hits = 0
    left = int(samples)
    while left > 0:
        k = min(chunk, left)
        Z = rng.uniform(bounding.lower, bounding.upper, size=(k, bounding.dim))
        hits += int(np.count_nonzero(P.contains(Z)))
        left -= k
    return hits / samples * bounding.volume()
