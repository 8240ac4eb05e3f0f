"""Discrete-time LTI models: rational transfer matrices, state-space systems,
realization, DC gains and system norms.

Polynomials are ascending-power throughout (``c[k]`` multiplies ``z**k``) and
are exposed as :class:`numpy.polynomial.Polynomial`.  Rational entries are held
internally in zero/pole/gain form so that products and inverses cancel common
roots directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import numpy.polynomial.polynomial as npp
from numpy.polynomial import Polynomial
from scipy import linalg as sla
from scipy import signal
from scipy.optimize import minimize_scalar

from .errors import (
    DimensionMismatch,
    ImproperEntry,
    PoleAtOne,
    SingularTransferMatrix,
    UnstableSystem,
)

CANCEL_TOL = 1e-8
RANK_TOL = 1e-9
_COEF_TOL = 1e-12


def _roots_match(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _cancel(zeros, poles, tol):
    """Remove zero/pole pairs closer than ``tol`` (relative), closest first."""
    zeros = list(zeros)
    poles = list(poles)
    while zeros and poles:
        zr = np.asarray(zeros)[:, None]
        pr = np.asarray(poles)[None, :]
        dist = np.abs(zr - pr) / np.maximum(1.0, np.maximum(np.abs(zr), np.abs(pr)))
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[i, j] > tol:
            break
        zeros.pop(i)
        poles.pop(j)
    return np.asarray(zeros, dtype=complex), np.asarray(poles, dtype=complex)


def _trim(c, scale=None):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if scale is None:
        scale = np.max(np.abs(c)) if c.size else 0.0
    thresh = _COEF_TOL * scale
    n = c.size
    while n > 0 and abs(c[n - 1]) <= thresh:
        n -= 1
    return c[:n]


def _poly_from_roots(roots):
    if len(roots) == 0:
        return np.ones(1)
    return np.real(npp.polyfromroots(roots))


def _multiset_union(base, extra, tol):
    """Return (union, extra_only) where union = base plus unmatched items of extra."""
    free = list(range(len(base)))
    added = []
    for r in extra:
        hit = None
        for k in free:
            if _roots_match(base[k], r, tol):
                hit = k
                break
        if hit is None:
            added.append(r)
        else:
            free.remove(hit)
    union = list(base) + added
    base_only = [base[k] for k in free]
    return union, added, base_only


class RationalTf:
    """Scalar rational function n(z)/d(z) with real coefficients.

    Parameters
    ----------
    num, den : array_like or Polynomial
        Ascending coefficients.  Common roots are cancelled on construction.
    tol : float
        Relative root distance below which a zero and a pole cancel.
    """

    __slots__ = ("gain", "zeros", "poles")

    def __init__(self, num, den=(1.0,), tol=CANCEL_TOL):
        if isinstance(num, Polynomial):
            num = num.coef
        if isinstance(den, Polynomial):
            den = den.coef
        n = _trim(num)
        d = _trim(den)
        if d.size == 0:
            raise ZeroDivisionError("denominator is the zero polynomial")
        if n.size == 0:
            self._set(0.0, [], [])
            return
        gain = n[-1] / d[-1]
        z = npp.polyroots(n) if n.size > 1 else np.zeros(0)
        p = npp.polyroots(d) if d.size > 1 else np.zeros(0)
        z, p = _cancel(z, p, tol)
        self._set(gain, z, p)

    def _set(self, gain, zeros, poles):
        self.gain = float(gain)
        if self.gain == 0.0:
            zeros, poles = [], []
        self.zeros = np.asarray(zeros, dtype=complex)
        self.poles = np.asarray(poles, dtype=complex)

    @classmethod
    def from_zpk(cls, zeros, poles, gain, tol=CANCEL_TOL):
        obj = cls.__new__(cls)
        z, p = _cancel(np.asarray(zeros, complex), np.asarray(poles, complex), tol)
        obj._set(gain, z, p)
        return obj

    @classmethod
    def constant(cls, c):
        return cls.from_zpk([], [], float(c))

    # -- coefficient views -------------------------------------------------
    @property
    def num(self) -> Polynomial:
        return Polynomial(self.gain * _poly_from_roots(self.zeros))

    @property
    def den(self) -> Polynomial:
        return Polynomial(_poly_from_roots(self.poles))

    @property
    def is_zero(self) -> bool:
        return self.gain == 0.0

    @property
    def relative_degree(self) -> int:
        """deg(den) - deg(num); large for the zero function."""
        if self.is_zero:
            return 10**9
        return len(self.poles) - len(self.zeros)

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def is_stable(self, margin=0.0) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0 - margin))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.gain, dtype=complex)
        for r in self.zeros:
            out = out * (z - r)
        for r in self.poles:
            out = out / (z - r)
        return out

    # -- arithmetic ----------------------------------------------------------
    @staticmethod
    def _coerce(other):
        if isinstance(other, RationalTf):
            return other
        if np.isscalar(other):
            return RationalTf.constant(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        lcm, b_extra, a_only = _multiset_union(list(self.poles), list(other.poles), CANCEL_TOL)
        ta = self.gain * _poly_from_roots(list(self.zeros) + b_extra)
        tb = other.gain * _poly_from_roots(list(other.zeros) + a_only)
        scale = max(np.max(np.abs(ta)), np.max(np.abs(tb)))
        n = np.zeros(max(ta.size, tb.size))
        n[: ta.size] += ta
        n[: tb.size] += tb
        n = _trim(n, scale)
        if n.size == 0:
            return RationalTf.constant(0.0)
        z = npp.polyroots(n) if n.size > 1 else np.zeros(0)
        return RationalTf.from_zpk(z, lcm, n[-1])

    __radd__ = __add__

    def __neg__(self):
        return RationalTf.from_zpk(self.zeros, self.poles, -self.gain)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return RationalTf.constant(0.0)
        return RationalTf.from_zpk(
            np.concatenate([self.zeros, other.zeros]),
            np.concatenate([self.poles, other.poles]),
            self.gain * other.gain,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        if self.is_zero:
            raise ZeroDivisionError("reciprocal of the zero function")
        return RationalTf.from_zpk(self.poles, self.zeros, 1.0 / self.gain)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def times_zpow(self, k: int):
        """Multiply by ``z**k`` (negative ``k`` adds delays)."""
        if self.is_zero or k == 0:
            return self
        if k > 0:
            return RationalTf.from_zpk(np.concatenate([self.zeros, np.zeros(k)]), self.poles, self.gain)
        return RationalTf.from_zpk(self.zeros, np.concatenate([self.poles, np.zeros(-k)]), self.gain)

    def __repr__(self):
        return f"RationalTf(num={np.round(self.num.coef, 6).tolist()}, den={np.round(self.den.coef, 6).tolist()})"


def _as_tf(x) -> RationalTf:
    if isinstance(x, RationalTf):
        return x
    if isinstance(x, (tuple, list)) and len(x) == 2:
        return RationalTf(x[0], x[1])
    return RationalTf.constant(float(x))


class RationalMatrix:
    """Rectangular grid of :class:`RationalTf` entries."""

    def __init__(self, entries):
        rows = [[_as_tf(e) for e in row] for row in entries]
        if not rows or not rows[0]:
            raise DimensionMismatch("rational matrix needs at least one entry")
        if any(len(r) != len(rows[0]) for r in rows):
            raise DimensionMismatch("ragged rational matrix")
        self.entries = tuple(tuple(r) for r in rows)

    @classmethod
    def from_array(cls, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls([[RationalTf.constant(v) for v in row] for row in M])

    @classmethod
    def identity(cls, m):
        return cls.from_array(np.eye(m))

    @classmethod
    def diag(cls, items):
        items = [_as_tf(e) for e in items]
        m = len(items)
        zero = RationalTf.constant(0.0)
        return cls([[items[i] if i == j else zero for j in range(m)] for i in range(m)])

    @classmethod
    def block(cls, blocks):
        rows = []
        for brow in blocks:
            h = brow[0].rows
            for i in range(h):
                row = []
                for b in brow:
                    if b.rows != h:
                        raise DimensionMismatch("block rows disagree")
                    row.extend(b.entries[i])
                rows.append(row)
        return cls(rows)

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __getitem__(self, idx):
        i, j = idx
        if isinstance(i, int) and isinstance(j, int):
            return self.entries[i][j]
        ri = range(self.rows)[i] if isinstance(i, slice) else ([i] if isinstance(i, int) else list(i))
        cj = range(self.cols)[j] if isinstance(j, slice) else ([j] if isinstance(j, int) else list(j))
        return RationalMatrix([[self.entries[a][b] for b in cj] for a in ri])

    def __call__(self, z) -> np.ndarray:
        """Evaluate at a scalar point; returns a complex (rows, cols) array."""
        return np.array([[complex(e(z)) for e in row] for row in self.entries])

    def _zip(self, other, op):
        if not isinstance(other, RationalMatrix):
            other = RationalMatrix.from_array(other)
        if other.shape != self.shape:
            raise DimensionMismatch(f"shapes {self.shape} and {other.shape}")
        return RationalMatrix(
            [[op(a, b) for a, b in zip(ra, rb)] for ra, rb in zip(self.entries, other.entries)]
        )

    def __add__(self, other):
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: a - b)

    def __neg__(self):
        return RationalMatrix([[-e for e in row] for row in self.entries])

    def __mul__(self, s):
        s = _as_tf(s)
        return RationalMatrix([[e * s for e in row] for row in self.entries])

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, RationalMatrix):
            other = RationalMatrix.from_array(other)
        if self.cols != other.rows:
            raise DimensionMismatch(f"cannot multiply {self.shape} by {other.shape}")
        out = []
        for i in range(self.rows):
            row = []
            for j in range(other.cols):
                acc = RationalTf.constant(0.0)
                for k in range(self.cols):
                    a = self.entries[i][k]
                    b = other.entries[k][j]
                    if not (a.is_zero or b.is_zero):
                        acc = acc + a * b
                row.append(acc)
            out.append(row)
        return RationalMatrix(out)

    def __rmatmul__(self, other):
        return RationalMatrix.from_array(other) @ self

    def times_zpow(self, k: int):
        return RationalMatrix([[e.times_zpow(k) for e in row] for row in self.entries])

    def diagonal(self):
        if self.rows != self.cols:
            raise DimensionMismatch("diagonal of a non-square matrix")
        return RationalMatrix.diag([self.entries[i][i] for i in range(self.rows)])

    def is_proper(self) -> bool:
        return all(e.is_proper for row in self.entries for e in row)

    def poles(self) -> np.ndarray:
        ps = [e.poles for row in self.entries for e in row]
        return np.concatenate(ps) if ps else np.zeros(0, complex)

    def is_stable(self, margin=0.0) -> bool:
        p = self.poles()
        return bool(np.all(np.abs(p) < 1.0 - margin))

    def is_diagonal(self) -> bool:
        return all(self.entries[i][j].is_zero for i in range(self.rows) for j in range(self.cols) if i != j)

    def det(self) -> RationalTf:
        if self.rows != self.cols:
            raise DimensionMismatch("determinant of a non-square matrix")
        return _det([list(r) for r in self.entries])

    def inverse(self):
        return rational_inverse(self)

    def __repr__(self):
        return f"RationalMatrix({self.rows}x{self.cols})"


def _det(E):
    m = len(E)
    if m == 1:
        return E[0][0]
    if m == 2:
        return E[0][0] * E[1][1] - E[0][1] * E[1][0]
    acc = RationalTf.constant(0.0)
    for j in range(m):
        if E[0][j].is_zero:
            continue
        minor = [row[:j] + row[j + 1:] for row in E[1:]]
        term = E[0][j] * _det(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def rational_inverse(G: RationalMatrix) -> RationalMatrix:
    """Inverse of a square rational matrix via the adjugate.

    Raises
    ------
    SingularTransferMatrix
        If the determinant vanishes identically.
    """
    if G.rows != G.cols:
        raise DimensionMismatch("inverse of a non-square matrix")
    m = G.rows
    E = [list(r) for r in G.entries]
    d = _det(E)
    if d.is_zero:
        raise SingularTransferMatrix("determinant is identically zero")
    if m == 1:
        return RationalMatrix([[d.reciprocal()]])
    dinv = d.reciprocal()
    out = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(E) if k != i]
            c = _det(minor)
            if (i + j) % 2:
                c = -c
            out[j][i] = c * dinv
    return RationalMatrix(out)


def make_proper(M: RationalMatrix):
    """Pad with the fewest unit delays that make every entry proper.

    Returns
    -------
    (RationalMatrix, int)
        ``M / z**beta`` and ``beta``.
    """
    beta = 0
    for row in M.entries:
        for e in row:
            if not e.is_zero:
                beta = max(beta, -e.relative_degree)
    if beta == 0:
        return M, 0
    return M.times_zpow(-beta), beta


# -- state space -------------------------------------------------------------


def _mat(x, shape=None):
    a = np.array(x, dtype=float)
    if shape is not None and a.size == 0:
        a = np.zeros(shape)
    return a


def _shaped(x, rows, cols, name):
    """``x`` as a (rows, cols) array; vectors fill a single row or column."""
    a = _mat(x)
    if a.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    if a.ndim == 1 and a.size == rows * cols and 1 in (rows, cols):
        return a.reshape(rows, cols)
    if a.ndim == 0 and rows == cols == 1:
        return a.reshape(1, 1)
    if a.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must be {rows}x{cols}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """x(t+1) = A x + B u + Bw w,  y = C x + D u + Dw w."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Bw: np.ndarray = field(default=None)
    Dw: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.atleast_2d(_mat(self.A)) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        D = np.atleast_2d(_mat(self.D))
        p, m = D.shape
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = _shaped(self.B, n, m, "B")
        C = _shaped(self.C, p, n, "C")
        if self.Bw is None and self.Dw is None:
            Bw = np.zeros((n, 0))
            Dw = np.zeros((p, 0))
        else:
            nd = np.atleast_2d(_mat(self.Bw if self.Bw is not None else self.Dw))
            nd = nd.shape[1] if nd.ndim == 2 and nd.shape[0] == (n if self.Bw is not None else p) else 1
            Bw = _shaped(self.Bw, n, nd, "Bw") if self.Bw is not None else np.zeros((n, nd))
            Dw = _shaped(self.Dw, p, nd, "Dw") if self.Dw is not None else np.zeros((p, nd))
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D), ("Bw", Bw), ("Dw", Dw)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def nd(self) -> int:
        return self.Bw.shape[1]

    def spectral_radius(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def is_stable(self, margin=0.0) -> bool:
        return self.spectral_radius() < 1.0 - margin

    def select(self, outputs=None, inputs=None):
        """Subsystem on the given output rows / input columns (disturbances kept)."""
        o = slice(None) if outputs is None else np.atleast_1d(outputs)
        i = slice(None) if inputs is None else np.atleast_1d(inputs)
        return LinearSystem(self.A, self.B[:, i], self.C[o], self.D[o][:, i], self.Bw, self.Dw[o])

    def with_disturbance(self, Bw, Dw):
        return LinearSystem(self.A, self.B, self.C, self.D, Bw, Dw)


def _krylov_basis(A, B, tol):
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A, 2) if n else 0.0, np.linalg.norm(B, 2) if B.size else 0.0)
    Q = np.zeros((n, 0))
    V = B
    for _ in range(n):
        for _ in range(2):
            V = V - Q @ (Q.T @ V)
        if V.size == 0:
            break
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > tol * scale))
        r = min(r, n - Q.shape[1])
        if r == 0:
            break
        Qn = U[:, :r]
        Q = np.hstack([Q, Qn])
        if Q.shape[1] == n:
            break
        V = A @ Qn
    return Q


def minimal_realization(S: LinearSystem, tol=RANK_TOL) -> LinearSystem:
    """Drop uncontrollable then unobservable modes (orthogonal Krylov bases)."""
    if S.n == 0:
        return S
    Bfull = np.hstack([S.B, S.Bw])
    Qc = _krylov_basis(S.A, Bfull, tol)
    A1, B1, C1, W1 = Qc.T @ S.A @ Qc, Qc.T @ S.B, S.C @ Qc, Qc.T @ S.Bw
    Qo = _krylov_basis(A1.T, C1.T, tol)
    A2, B2, C2, W2 = Qo.T @ A1 @ Qo, Qo.T @ B1, C1 @ Qo, Qo.T @ W1
    if S.nd:
        return LinearSystem(A2, B2, C2, S.D, W2, S.Dw)
    return LinearSystem(A2, B2, C2, S.D)


def _column_realization(col: Sequence[RationalTf]):
    lcm = []
    for e in col:
        if e.is_zero:
            continue
        lcm, _, _ = _multiset_union(lcm, list(e.poles), CANCEL_TOL)
    q = len(lcm)
    den = _poly_from_roots(lcm)
    p = len(col)
    D = np.zeros(p)
    Cc = np.zeros((p, q))
    for i, e in enumerate(col):
        if e.is_zero:
            continue
        _, extra, _ = _multiset_union(list(e.poles), lcm, CANCEL_TOL)
        num = e.gain * _poly_from_roots(list(e.zeros) + extra)
        num = np.concatenate([num, np.zeros(max(0, q + 1 - num.size))])
        D[i] = num[q]
        rem = num[: q + 1] - D[i] * den
        Cc[i] = rem[:q][::-1]
    A = np.zeros((q, q))
    if q:
        A[0] = -den[:q][::-1]
        A[1:, :-1] = np.eye(q - 1)
    B = np.zeros((q, 1))
    if q:
        B[0, 0] = 1.0
    return A, B, Cc, D


def realize(M: RationalMatrix, tol=RANK_TOL) -> LinearSystem:
    """Minimal state-space realization of a proper rational matrix.

    Each column is put in controller-canonical form over the least common
    denominator of that column; the stacked model is then reduced.
    """
    if not M.is_proper():
        raise ImproperEntry("every entry must be proper to realize")
    blocks = [_column_realization([M.entries[i][j] for i in range(M.rows)]) for j in range(M.cols)]
    A = sla.block_diag(*[b[0] for b in blocks]) if blocks else np.zeros((0, 0))
    n = sum(b[0].shape[0] for b in blocks)
    A = np.asarray(A).reshape(n, n)
    B = np.zeros((n, M.cols))
    C = np.zeros((M.rows, n))
    D = np.zeros((M.rows, M.cols))
    k = 0
    for j, (Aj, Bj, Cj, Dj) in enumerate(blocks):
        q = Aj.shape[0]
        B[k:k + q, j] = Bj[:, 0]
        C[:, k:k + q] = Cj
        D[:, j] = Dj
        k += q
    return minimal_realization(LinearSystem(A, B, C, D), tol)


def transfer_matrix(S: LinearSystem) -> RationalMatrix:
    """Rational matrix of the u -> y map."""
    if S.n == 0:
        return RationalMatrix.from_array(S.D)
    rows = []
    for i in range(S.p):
        row = []
        for j in range(S.m):
            # reduce each entry first: hidden repeated modes make root finding ill-conditioned
            R = minimal_realization(LinearSystem(S.A, S.B[:, [j]], S.C[[i]], S.D[[i]][:, [j]]))
            if R.n == 0:
                row.append(RationalTf([float(R.D[0, 0])], [1.0]))
                continue
            num, den = signal.ss2tf(R.A, R.B, R.C, R.D)
            row.append(RationalTf(num[0][::-1], den[::-1]))
        rows.append(row)
    return RationalMatrix(rows)


def markov_parameters(S: LinearSystem, count: int) -> np.ndarray:
    """Impulse response samples h[0]=D, h[k]=C A^(k-1) B for k < count."""
    h = np.zeros((count, S.p, S.m))
    if count == 0:
        return h
    h[0] = S.D
    X = S.B.copy()
    for k in range(1, count):
        h[k] = S.C @ X
        X = S.A @ X
    return h


def dc_gain(S: LinearSystem) -> np.ndarray:
    """C (I - A)^-1 B + D."""
    if S.n == 0:
        return np.array(S.D, dtype=float)
    eig = np.linalg.eigvals(S.A)
    if np.any(np.abs(eig - 1.0) < 1e-10):
        raise PoleAtOne("A has an eigenvalue at 1")
    return S.C @ np.linalg.solve(np.eye(S.n) - S.A, S.B) + S.D


def _require_stable(S):
    if not S.is_stable():
        raise UnstableSystem(f"spectral radius {S.spectral_radius():.6g} >= 1")


def _sigma_max(S: LinearSystem, w):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if S.n == 0:
        G = np.broadcast_to(S.D, (w.size,) + S.D.shape)
    else:
        zI = np.exp(1j * w)[:, None, None] * np.eye(S.n)
        X = np.linalg.solve(zI - S.A, np.broadcast_to(S.B, (w.size,) + S.B.shape))
        G = S.C @ X + S.D
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def hinf_norm(S: LinearSystem, tol=1e-6, grid=2048) -> float:
    """Peak largest singular value over the unit circle."""
    _require_stable(S)
    if S.p == 0 or S.m == 0:
        return 0.0
    w = np.linspace(0.0, np.pi, grid)
    s = _sigma_max(S, w)
    k = int(np.argmax(s))
    best = float(s[k])
    lo, hi = w[max(k - 1, 0)], w[min(k + 1, grid - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -_sigma_max(S, x)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": tol})
        best = max(best, float(-res.fun))
    return best


def l1_impulse_norm(S: LinearSystem, tail_tol=1e-9, max_terms=200000) -> float:
    """Largest row sum of absolute impulse-response entries."""
    _require_stable(S)
    acc = np.abs(S.D).sum(axis=1) if S.m else np.zeros(S.p)
    if S.n == 0:
        return float(acc.max()) if acc.size else 0.0
    rho = S.spectral_radius()
    nb = np.linalg.norm(S.B, 2)
    CA = S.C.copy()
    for _ in range(max_terms):
        tail = np.linalg.norm(CA, 2) * nb / (1.0 - rho)
        if tail < tail_tol:
            break
        acc = acc + np.abs(CA @ S.B).sum(axis=1)
        CA = CA @ S.A
    return float(acc.max())


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.atleast_2d(np.asarray(M, dtype=float)), compute_uv=False)


def condition_number(M) -> float:
    s = singular_values(M)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def simulate(S: LinearSystem, x0, u, w=None):
    """Forward recursion.

    Returns
    -------
    states : ndarray, shape (T+1, n)
    outputs : ndarray, shape (T, p)
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None] if S.m == 1 else u[None, :]
    T = u.shape[0]
    if u.shape[1] != S.m:
        raise DimensionMismatch(f"input width {u.shape[1]} != {S.m}")
    x = np.zeros(S.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x.size != S.n:
        raise DimensionMismatch(f"x0 has {x.size} entries, expected {S.n}")
    if w is not None:
        w = np.asarray(w, dtype=float).reshape(T, -1) if np.size(w) else np.zeros((T, 0))
        if w.shape[0] != T or w.shape[1] != S.nd:
            raise DimensionMismatch("disturbance sequence shape mismatch")
    X = np.zeros((T + 1, S.n))
    Y = np.zeros((T, S.p))
    X[0] = x
    for t in range(T):
        y = S.C @ x + S.D @ u[t]
        xn = S.A @ x + S.B @ u[t]
        if w is not None and S.nd:
            y = y + S.Dw @ w[t]
            xn = xn + S.Bw @ w[t]
        Y[t] = y
        x = xn
        X[t + 1] = x
    return X, Y


# -- system files --------------------------------------------------------------


def system_from_dict(d: dict):
    """Build a RationalMatrix (``{"tf": ...}``) or LinearSystem (``{"ss": ...}``)."""
    if "tf" in d:
        tf = d["tf"]
        rows, cols = int(tf["rows"]), int(tf["cols"])
        ent = tf["entries"]
        if len(ent) != rows * cols:
            raise DimensionMismatch(f"expected {rows * cols} entries, got {len(ent)}")
        return RationalMatrix([[RationalTf(e["num"], e["den"]) for e in ent[i * cols:(i + 1) * cols]]
                               for i in range(rows)])
    if "ss" in d:
        ss = d["ss"]
        return LinearSystem(ss["A"], ss["B"], ss["C"], ss["D"], ss.get("Bw"), ss.get("Dw"))
    raise ValueError("system must have a 'tf' or 'ss' key")


def system_to_dict(sys) -> dict:
    if isinstance(sys, RationalMatrix):
        ent = [{"num": e.num.coef.tolist(), "den": e.den.coef.tolist()} for row in sys.entries for e in row]
        return {"tf": {"rows": sys.rows, "cols": sys.cols, "entries": ent}}
    d = {"A": sys.A.tolist(), "B": sys.B.tolist(), "C": sys.C.tolist(), "D": sys.D.tolist()}
    if sys.nd:
        d["Bw"] = sys.Bw.tolist()
        d["Dw"] = sys.Dw.tolist()
    return {"ss": d}


def load_system(path):
    with open(Path(path)) as fh:
        return system_from_dict(json.load(fh))


def as_state_space(sys) -> LinearSystem:
    if isinstance(sys, LinearSystem):
        return sys
    return realize(sys)


def tf_list(items: Iterable) -> list:
    return [_as_tf(e) for e in items]
