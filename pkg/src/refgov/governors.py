"""Per-step reference governor kernels.

All kernels take an admissible set ``{(x, v): Hx x + Hv v <= h}``, the
current state view ``x``, the previously applied input ``v_prev`` and the
requested reference ``r``, and return the admitted input.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InfeasibleStart
from .mas import Mas
from .polytope import Polytope, lp_max

START_TOL = 1e-7
A_TOL = 1e-12


@dataclass
class GovernorState:
    """Mutable governor context: the last admitted input."""

    v_prev: np.ndarray
    initialized: bool = True

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros(m))


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    v_new: np.ndarray
    binding_row: Optional[int] = None


def _rows_rhs(mas: Mas, x, v_prev, channel=None, hx=None):
    if hx is None:
        hx = mas.h - mas.Hx @ x
    b = hx - mas.Hu @ v_prev
    worst = b.min() if b.size else 0.0
    if worst < -START_TOL:
        raise InfeasibleStart(f"start pair violates the admissible set by {-worst:.3g}",
                              channel=channel, violation=-worst)
    return b


def _vec(v, n):
    v = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if v.size != n:
        raise DimensionMismatch(f"expected {n} entries, got {v.size}")
    return v


def srg_step_explicit(mas: Mas, x, v_prev, r, channel=None) -> KappaResult:
    """Closed-form scalar governor step.

    For ``a = Hv (r - v_prev)`` and ``b = h - Hx x - Hv v_prev`` the admitted
    step is ``kappa = max(0, min(1, min_{a_i > 0} b_i / a_i))``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    v_prev = _vec(v_prev, mas.n_u)
    r = _vec(r, mas.n_u)
    hx = mas.h - mas.Hx @ x
    b = _rows_rhs(mas, x, v_prev, channel, hx)
    a = mas.Hu @ (r - v_prev)
    kappa = 1.0
    row = None
    pos = np.flatnonzero(a > A_TOL)
    if pos.size:
        ratios = b[pos] / a[pos]
        k = int(np.argmin(ratios))
        if ratios[k] < 1.0:
            kappa = float(ratios[k])
            row = int(pos[k])
    kappa = max(kappa, 0.0)
    return KappaResult(kappa, _advance(mas, x, v_prev, r, kappa, row, hx), row)


def _advance(mas, x, v_prev, r, kappa, row, hx=None):
    """``v_prev + kappa (r - v_prev)``, landing exactly on ``r`` or on the binding row."""
    if kappa == 1.0:
        return r.copy()
    if kappa > 0.0 and row is not None and mas.n_u == 1:
        if hx is None:
            hx = mas.h - mas.Hx @ x
        return np.array([hx[row] / mas.Hu[row, 0]])
    return v_prev + kappa * (r - v_prev)


def srg_step_lp(mas: Mas, x, v_prev, r, channel=None) -> KappaResult:
    """Same contract as :func:`srg_step_explicit`, solved with the generic LP."""
    x = np.asarray(x, dtype=float).reshape(-1)
    v_prev = _vec(v_prev, mas.n_u)
    r = _vec(r, mas.n_u)
    b = np.maximum(_rows_rhs(mas, x, v_prev, channel), 0.0)
    a = mas.Hu @ (r - v_prev)
    H = np.concatenate([a, [1.0, -1.0]])[:, None]
    h = np.concatenate([b, [1.0, 0.0]])
    kappa, _ = lp_max(np.ones(1), Polytope(H, h))
    kappa = float(min(max(kappa, 0.0), 1.0))
    slack = b - a * kappa
    row = int(np.argmin(slack)) if kappa < 1.0 and b.size else None
    return KappaResult(kappa, _advance(mas, x, v_prev, r, kappa, row), row)


def _active_set_qp(Q, c, A, b, x0, W0, tol=1e-12, max_iter=500):
    """Primal active-set method for ``min 0.5 x'Qx + c'x s.t. A x <= b`` (Q > 0).

    ``x0`` must be feasible and ``W0`` a linearly independent set of rows
    active at ``x0``.  Ties are broken by lowest constraint index.
    """
    x = x0.astype(float).copy()
    W = sorted(W0)
    n = x.size
    for it in range(max_iter):
        g = Q @ x + c
        k = len(W)
        Aw = A[W] if k else np.zeros((0, n))
        K = np.zeros((n + k, n + k))
        K[:n, :n] = Q
        K[:n, n:] = Aw.T
        K[n:, :n] = Aw
        if k == n:
            # a full working set pins x; only the multipliers are unknown
            p = np.zeros(n)
            lam = np.linalg.solve(Aw.T, -g)
        else:
            sol = np.linalg.solve(K, np.concatenate([-g, np.zeros(k)]))
            p = sol[:n]
            lam = sol[n:]
        if np.max(np.abs(p), initial=0.0) <= 1e-10 * (1.0 + np.max(np.abs(x), initial=0.0)):
            neg = [W[i] for i in range(k) if lam[i] < -tol]
            if not neg:
                return x, it
            W.remove(min(neg))
            continue
        Ap = A @ p
        alpha, block = 1.0, None
        for j in range(A.shape[0]):
            if j in W or Ap[j] <= 1e-14:
                continue
            step = (b[j] - A[j] @ x) / Ap[j]
            if step < alpha - 1e-15:
                alpha, block = max(step, 0.0), j
        x = x + alpha * p
        if block is not None:
            W = sorted(W + [block])
    raise RuntimeError("active-set iteration cap reached")


def vrg_step(mas: Mas, x, u_prev, r, channel=None):
    """Vector governor step with one gain per input channel.

    Minimizes ``||u - r||^2`` over ``u = u_prev + diag(kappa)(r - u_prev)``,
    ``kappa in [0, 1]^m``, subject to ``(x, u)`` in the set.

    Returns
    -------
    (ndarray, ndarray)
        The admitted input and the gains.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u_prev = _vec(u_prev, mas.n_u)
    r = _vec(r, mas.n_u)
    b = np.maximum(_rows_rhs(mas, x, u_prev, channel), 0.0)
    d = r - u_prev
    free = np.flatnonzero(np.abs(d) > 0.0)
    kappa = np.ones(mas.n_u)
    if free.size == 0:
        return u_prev.copy(), kappa
    q = free.size
    Ak = mas.Hu[:, free] * d[free]
    A = np.vstack([Ak, np.eye(q), -np.eye(q)])
    bb = np.concatenate([b, np.ones(q), np.zeros(q)])
    Q = np.diag(2.0 * d[free] ** 2)
    c = -2.0 * d[free] ** 2
    k0 = np.zeros(q)
    W0 = list(range(Ak.shape[0] + q, Ak.shape[0] + 2 * q))
    ks, _ = _active_set_qp(Q, c, A, bb, k0, W0)
    kappa[free] = np.clip(ks, 0.0, 1.0)
    return np.where(kappa == 1.0, r, u_prev + kappa * d), kappa


def srg_bank_step(mas_list, x_list, v_prev, r_prime, step=srg_step_explicit) -> list[KappaResult]:
    """Independent scalar governor per channel.

    A channel whose set is ``None`` passes its reference through unchanged.
    """
    v_prev = np.asarray(v_prev, dtype=float).reshape(-1)
    r_prime = np.asarray(r_prime, dtype=float).reshape(-1)
    out = []
    for i, mas in enumerate(mas_list):
        if mas is None:
            out.append(KappaResult(1.0, r_prime[i:i + 1].copy(), None))
            continue
        out.append(step(mas, x_list[i], v_prev[i:i + 1], r_prime[i:i + 1], channel=i))
    return out


class ExplicitBank:
    """Closed-form scalar step for a whole bank of single-input channels.

    The row scan of each channel runs on Python floats, which for the few
    dozen rows of a typical channel beats per-call numpy overhead.  The state
    terms ``h - Hx x`` use the same products as :func:`srg_step_explicit`, so
    per channel the result matches it bitwise.  Channels whose set is
    ``None`` pass through.
    """

    def __init__(self, mas_list):
        if any(mas is not None and mas.n_u != 1 for mas in mas_list):
            raise DimensionMismatch("bank channels must have a single input")
        self.m = len(mas_list)
        self.live = [i for i, mas in enumerate(mas_list) if mas is not None]
        self.sets = [mas_list[i] for i in self.live]
        self.hu = [mas.Hu[:, 0].tolist() for mas in self.sets]

    def __call__(self, x_list, v_prev, r_prime):
        """Return ``(v_new, kappa)`` as m-vectors."""
        vp = np.asarray(v_prev, dtype=float).reshape(-1).tolist()
        v = np.asarray(r_prime, dtype=float).reshape(-1).tolist()
        kappa = [1.0] * self.m
        for i, mas, hu in zip(self.live, self.sets, self.hu):
            hx = (mas.h - mas.Hx @ np.asarray(x_list[i], dtype=float).reshape(-1)).tolist()
            n = len(hx)
            vi = vp[i]
            d = v[i] - vi
            best, row = 1.0, -1
            for j in range(n):
                bj = hx[j] - hu[j] * vi
                if bj < -START_TOL:
                    raise InfeasibleStart(f"start pair violates the admissible set by {-bj:.3g}",
                                          channel=i, violation=-bj)
                aj = hu[j] * d
                if aj > A_TOL and bj / aj < best:
                    best, row = bj / aj, j
            if row >= 0:
                if best > 0.0:
                    kappa[i] = best
                    v[i] = hx[row] / hu[row]
                else:
                    kappa[i] = 0.0
                    v[i] = vi + 0.0 * d
        return np.array(v), np.array(kappa)


@dataclass
class StepTimer:
    """Collects wall-clock durations of wrapped governor calls."""

    samples: list = field(default_factory=list)
    clock: Callable[[], float] = time.perf_counter

    def wrap(self, fn):
        def timed(*args, **kwargs):
            t0 = self.clock()
            out = fn(*args, **kwargs)
            self.samples.append(self.clock() - t0)
            return out

        return timed

    def reset(self):
        self.samples.clear()
