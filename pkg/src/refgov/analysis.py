"""Steady-state and transient relations between references, governed inputs
and plant inputs, checked numerically.
"""

from __future__ import annotations

import numpy as np

from .polytope import Box


def steady_input_box(W0_diag, Y: Box, epsilon: float) -> Box:
    """``{v : W0_ii v_i in (1 - epsilon) Y_i}`` for a diagonal steady gain."""
    w = np.asarray(W0_diag, dtype=float).reshape(-1)
    lo = (1.0 - epsilon) * Y.lower / w
    hi = (1.0 - epsilon) * Y.upper / w
    return Box(np.minimum(lo, hi), np.maximum(lo, hi))


def in_steady_set(G0, Y: Box, epsilon: float, u, tol=1e-6):
    """Membership of ``u`` (one point or a batch) in ``{u : G0 u in (1 - epsilon) Y}``."""
    y = np.asarray(u, float) @ np.asarray(G0, float).T
    return np.all((y <= (1.0 - epsilon) * Y.upper + tol) & (y >= (1.0 - epsilon) * Y.lower - tol), axis=-1)


def boundary_distance(G0, Y: Box, epsilon: float, u):
    """Smallest distance (in output units) from ``G0 u`` to an active face."""
    y = np.asarray(u, float) @ np.asarray(G0, float).T
    up = np.abs((1.0 - epsilon) * Y.upper - y)
    lo = np.abs(y - (1.0 - epsilon) * Y.lower)
    return np.min(np.minimum(up, lo), axis=-1)


def sample_box_boundary(box: Box, count: int, rng, window=10.0) -> np.ndarray:
    """Uniform points on the faces of a box; infinite sides are cut at ``window``."""
    lo = np.where(np.isfinite(box.lower), box.lower, -window)
    hi = np.where(np.isfinite(box.upper), box.upper, window)
    n = lo.size
    faces = [(i, s) for i in range(n) for s in (0, 1)
             if np.isfinite(box.lower[i] if s == 0 else box.upper[i])]
    pts = rng.uniform(lo, hi, size=(count, n))
    pick = rng.integers(len(faces), size=count)
    for k, f in enumerate(pick):
        i, s = faces[f]
        pts[k, i] = lo[i] if s == 0 else hi[i]
    return pts


def mapping_error(M, G0_src, W0_dst_diag, Y: Box, epsilon: float, count=500, rng=None, tol=1e-6):
    """Check ``V = M U`` point by point.

    ``U = {u : G0_src u in Ybar}``, ``V = {v : W0 v in Ybar}`` with ``Ybar =
    (1 - epsilon) Y``.  Boundary points of each set are mapped through ``M``
    (resp. ``M^-1``) and must land on the boundary of the other set.

    Returns
    -------
    float
        Largest output-space defect found (0 when the relation holds).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    M = np.asarray(M, float)
    G0 = np.asarray(G0_src, float)
    W0 = np.diag(np.asarray(W0_dst_diag, float))
    Ybar = Y.scaled(1.0 - epsilon)
    yb = sample_box_boundary(Ybar, count, rng)
    u_pts = np.linalg.solve(G0, yb.T).T
    v_pts = np.linalg.solve(W0, yb.T).T
    worst = 0.0
    for src, Mmap, Gd in ((u_pts, M, W0), (v_pts, np.linalg.inv(M), G0)):
        img = src @ Mmap.T
        y = img @ Gd.T
        excess = np.maximum(y - Ybar.upper, Ybar.lower - y)
        excess = np.where(np.isfinite(excess), excess, -np.inf)
        worst = max(worst, float(np.max(excess)))
        dist = np.min(np.minimum(np.abs(Ybar.upper - y), np.abs(y - Ybar.lower)), axis=1)
        worst = max(worst, float(np.max(dist)))
    return worst


def saturate(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def predicted_steady_v(F0_inv, W0_diag, Y: Box, epsilon: float, r):
    """Componentwise saturation of ``F0^-1 r`` at the steady-state bounds."""
    box = steady_input_box(W0_diag, Y, epsilon)
    return saturate(np.asarray(F0_inv, float) @ np.asarray(r, float), box.lower, box.upper)


def gain_sandwich(M, e_in, e_out):
    """Slack of ``||M^-1||^-1 |e_in| <= |e_out| <= ||M|| |e_in|`` (2-norms).

    Returns the smaller of the two slacks (nonnegative when both hold).
    """
    M = np.asarray(M, float)
    s = np.linalg.svd(M, compute_uv=False)
    a = np.linalg.norm(e_in)
    b = np.linalg.norm(e_out)
    return min(b - s[-1] * a, s[0] * a - b)


def shifted_error(u, r, delay: int) -> np.ndarray:
    """``u(t) - r(t - delay)`` with ``r`` taken as zero before the start."""
    u = np.asarray(u, float)
    r = np.asarray(r, float)
    out = u.copy()
    if delay < len(r):
        out[delay:] -= r[: len(r) - delay]
    return out


def l2(e) -> float:
    return float(np.sqrt(np.sum(np.asarray(e, float) ** 2)))


def linf(e) -> float:
    e = np.asarray(e, float)
    return float(np.max(np.abs(e))) if e.size else 0.0


def oscillation_p2p(y, frac=0.99) -> float:
    """Peak-to-peak swing after the signal first reaches ``frac`` of its maximum."""
    y = np.asarray(y, float).reshape(-1)
    top = y.max()
    t0 = int(np.flatnonzero(y >= frac * top)[0])
    tail = y[t0:]
    return float(tail.max() - tail.min())
