"""Maximal admissible sets over (initial state, constant input).

A point ``(x0, u0)`` is admissible if holding ``u0`` from state ``x0`` keeps
every future output inside the constraint box.  The sets are built row by
row over the horizon until a full batch of new rows is implied by the rows
already collected; a steady-state row tightened by ``1 - epsilon`` makes
this stop after finitely many steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyPolytope, EmptyRobustMas, NotFinitelyDetermined, UnstableSystem
from .polytope import Box, Polytope, redundant_against, remove_redundant, volume_mc, lp_max
from .sysmod import LinearSystem, dc_gain

DEFAULT_EPSILON = 0.01
DEFAULT_T_MAX = 500


@dataclass(frozen=True, eq=False)
class Mas:
    """Admissible set ``{(x, u): Hx x + Hu u <= h}``.

    Attributes
    ----------
    poly : Polytope
        Set over the stacked vector ``(x, u)``.
    n_x, n_u : int
    t_star : int
        Horizon at which the recursion found every new row redundant.
    epsilon : float
        Steady-state tightening used.
    kind : str
        ``"nominal"``, ``"robust"``, ``"delay"`` or ``"polytopic"``.
    """

    poly: Polytope
    n_x: int
    n_u: int
    t_star: int
    epsilon: float
    kind: str = "nominal"

    def __post_init__(self):
        if self.poly.dim != self.n_x + self.n_u:
            raise DimensionMismatch("polytope dimension differs from n_x + n_u")
        H = self.poly.H
        object.__setattr__(self, "_Hx", np.ascontiguousarray(H[:, : self.n_x]))
        object.__setattr__(self, "_Hu", np.ascontiguousarray(H[:, self.n_x:]))

    @property
    def Hx(self) -> np.ndarray:
        return self._Hx

    @property
    def Hu(self) -> np.ndarray:
        return self._Hu

    @property
    def h(self) -> np.ndarray:
        return self.poly.h

    def contains(self, x, u, tol=1e-9):
        """Single-point membership; use ``poly.contains`` for batches."""
        z = np.concatenate([np.atleast_1d(np.asarray(x, float)).reshape(-1),
                            np.atleast_1d(np.asarray(u, float)).reshape(-1)])
        return bool(self.poly.contains(z, tol))

    def slack(self, x, u) -> np.ndarray:
        return self.h - self.Hx @ np.asarray(x, float) - self.Hu @ np.atleast_1d(np.asarray(u, float))


def _check_constraint_box(Y: Box, p: int):
    if Y.dim != p:
        raise DimensionMismatch(f"constraint box has {Y.dim} entries for {p} outputs")
    if not Y.contains_origin_interior():
        raise ValueError("constraint box must contain the origin in its interior")


def _box_rows(G, Y: Box):
    """Rows encoding ``G z in Y`` (finite sides only)."""
    H, h = [], []
    for i in range(G.shape[0]):
        if np.isfinite(Y.upper[i]):
            H.append(G[i])
            h.append(Y.upper[i])
        if np.isfinite(Y.lower[i]):
            H.append(-G[i])
            h.append(-Y.lower[i])
    width = G.shape[1]
    return np.array(H).reshape(-1, width), np.array(h)


def _drop_zero_rows(H, h, err):
    nrm = np.linalg.norm(H, axis=1)
    zero = nrm <= 1e-14
    if np.any(h[zero] < -1e-12):
        raise err("a state-independent output row is violated")
    keep = ~zero
    return H[keep] / nrm[keep, None], h[keep] / nrm[keep]


def _recursion(S: LinearSystem, Y_at, steady_H, steady_h, t_max, err):
    n, m = S.n, S.m
    H, h = _drop_zero_rows(steady_H, steady_h, err)
    current = Polytope(H.reshape(-1, n + m), h)
    CA = S.C.copy()
    Gam = S.D.copy()
    for t in range(t_max + 1):
        Hn, hn = _box_rows(np.hstack([CA, Gam]), Y_at(t))
        Hn, hn = _drop_zero_rows(Hn, hn, err)
        keep = []
        worst, worst_excess = None, -np.inf
        for k in range(Hn.shape[0]):
            ok, excess = redundant_against(current, Hn[k], hn[k])
            if not ok:
                keep.append(k)
                if excess > worst_excess:
                    worst, worst_excess = k, excess
        if not keep:
            return current, t
        current = current.intersect(Polytope(Hn[keep], hn[keep]))
        Gam = Gam + CA @ S.B
        CA = CA @ S.A
    raise NotFinitelyDetermined(
        f"no finite determination within t_max={t_max}; worst row {worst} exceeds by {worst_excess:.3g}",
        worst_row=worst, excess=worst_excess,
    )


def build_mas(S: LinearSystem, Y: Box, epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX) -> Mas:
    """Nominal admissible set with steady-state tightening.

    Parameters
    ----------
    S : LinearSystem
        Asymptotically stable model; inputs are held constant.
    Y : Box
        Output constraints; one-sided (infinite) bounds are allowed.
    epsilon : float
        Steady-state outputs must lie in ``(1 - epsilon) Y``.
    t_max : int
        Horizon cap.

    Returns
    -------
    Mas
    """
    if not S.is_stable():
        raise UnstableSystem("admissible set needs an asymptotically stable model")
    _check_constraint_box(Y, S.p)
    G0 = dc_gain(S)
    sH, sh = _box_rows(np.hstack([np.zeros((S.p, S.n)), G0]), Y.scaled(1.0 - epsilon))
    poly, t_star = _recursion(S, lambda t: Y, sH, sh, t_max, EmptyPolytope)
    return Mas(remove_redundant(poly), S.n, S.m, t_star, float(epsilon))


def output_sets(S: LinearSystem, Y: Box, W: Box, count: int) -> list[Box]:
    """Shrinking constraint sets ``Y_0 .. Y_{count-1}`` for additive disturbances."""
    out = [Y.p_subtract(S.Dw, W)]
    CA = S.C.copy()
    for _ in range(1, count):
        out.append(out[-1].p_subtract(CA @ S.Bw, W))
        CA = CA @ S.A
    return out


def limit_output_set(S: LinearSystem, Y: Box, W: Box, tol=1e-14, max_terms=100000) -> tuple[Box, int]:
    """Run the shrinking recursion until increments are negligible.

    Returns the last set and the number of steps taken.
    """
    Yt = Y.p_subtract(S.Dw, W)
    if S.n == 0 or S.nd == 0:
        return Yt, 0
    CA = S.C.copy()
    scale = max(1.0, float(np.max(np.abs(W.halfwidth))))
    for t in range(max_terms):
        M = CA @ S.Bw
        if np.max(np.abs(M)) * scale < tol and t > S.n:
            return Yt, t
        Yt = Yt.p_subtract(M, W)
        CA = CA @ S.A
    return Yt, max_terms


def build_robust_mas(S: LinearSystem, Y: Box, W: Box, epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX) -> Mas:
    """Admissible set robust to additive box disturbances ``w in W``.

    Output rows at horizon ``t`` use the shrunken set ``Y_t``; the steady row
    uses ``(1 - epsilon)`` times the limit of that sequence.

    Raises
    ------
    EmptyRobustMas
        If the disturbance consumes the constraint set.
    """
    if not S.is_stable():
        raise UnstableSystem("admissible set needs an asymptotically stable model")
    _check_constraint_box(Y, S.p)
    if W.dim != S.nd:
        raise DimensionMismatch(f"disturbance box has {W.dim} entries, model has {S.nd}")
    if not W.is_bounded:
        raise ValueError("disturbance box must be bounded")
    Y_lim, _ = limit_output_set(S, Y, W)
    if not Y_lim.contains_origin_interior():
        raise EmptyRobustMas("disturbance leaves no room around the origin")
    seq = [Y.p_subtract(S.Dw, W)]
    CA = [S.C.copy()]

    def Y_at(t):
        while len(seq) <= t:
            seq.append(seq[-1].p_subtract(CA[0] @ S.Bw, W))
            CA[0] = CA[0] @ S.A
        if seq[t].is_empty:
            raise EmptyRobustMas(f"constraint set empty at step {t}")
        return seq[t]

    G0 = dc_gain(S)
    sH, sh = _box_rows(np.hstack([np.zeros((S.p, S.n)), G0]), Y_lim.scaled(1.0 - epsilon))
    poly, t_star = _recursion(S, Y_at, sH, sh, t_max, EmptyRobustMas)
    try:
        poly = remove_redundant(poly)
    except EmptyPolytope as exc:
        raise EmptyRobustMas(str(exc)) from exc
    return Mas(poly, S.n, S.m, t_star, float(epsilon), kind="robust")


def delay_mas(Y_i: Box, n_states: int) -> Mas:
    """State-independent set ``{v0 in Y_i}`` for a pure-delay channel."""
    lo, hi = float(Y_i.lower[0]), float(Y_i.upper[0])
    H, h = [], []
    if np.isfinite(hi):
        H.append(np.r_[np.zeros(n_states), 1.0])
        h.append(hi)
    if np.isfinite(lo):
        H.append(np.r_[np.zeros(n_states), -1.0])
        h.append(-lo)
    poly = Polytope(np.array(H).reshape(-1, n_states + 1), np.array(h))
    return Mas(poly, n_states, 1, 0, 0.0, kind="delay")


def build_polytopic_mas(vertices, C, Y: Box, dist: Box, epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX,
                        d=None, d_dist=None) -> Mas:
    """Admissible set for a single output under polytopic model uncertainty.

    Parameters
    ----------
    vertices : list of (A_j, b_j, E_j)
        Vertex dynamics ``x+ = A_j x + b_j v + E_j w``; ``v`` is the governed
        scalar input, ``w`` an unknown input ranging over ``dist``.
    C : (n,) array
        Output row.
    Y : Box
        One-dimensional constraint.
    dist : Box
        Bounds on ``w``; must be finite wherever ``E_j`` has nonzero columns.
    d, d_dist : optional
        Direct feedthrough of ``v`` and ``w``.

    Notes
    -----
    Rows are generated by repeated robust pre-images over all vertices and
    pruned for redundancy; the steady rows require every vertex's steady
    output to stay in ``(1 - epsilon)`` of the disturbance-shrunk set.
    """
    C = np.asarray(C, dtype=float).reshape(-1)
    n = C.size
    nw = dist.dim
    d = 0.0 if d is None else float(d)
    d_dist = np.zeros(nw) if d_dist is None else np.asarray(d_dist, float).reshape(-1)
    verts = [(np.asarray(A, float), np.asarray(b, float).reshape(-1), np.asarray(E, float).reshape(n, nw))
             for A, b, E in vertices]
    for A, _, _ in verts:
        if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
            raise UnstableSystem("vertex dynamics must be stable")

    def support(g):
        g = np.asarray(g, float).reshape(-1)
        active = np.abs(g) > 1e-14
        if np.any(active & ~(np.isfinite(dist.lower) & np.isfinite(dist.upper))):
            raise ValueError("unbounded disturbance direction couples into a constraint")
        hi, lo = Box(dist.lower[active], dist.upper[active]).image_support(g[active][None, :])
        return float(hi[0]) if active.any() else 0.0, float(lo[0]) if active.any() else 0.0

    H, h = [], []
    s_hi, s_lo = support(d_dist)
    for A, b, E in verts:
        T = np.linalg.solve(np.eye(n) - A, np.column_stack([b, E]))
        g = C @ T[:, 0] + d
        e = C @ T[:, 1:] + d_dist
        e_hi, e_lo = support(e)
        hi = (1.0 - epsilon) * (Y.upper[0] - e_hi)
        lo = (1.0 - epsilon) * (Y.lower[0] - e_lo)
        if not lo < hi:
            raise EmptyRobustMas("steady-state interval is empty for a vertex")
        if np.isfinite(hi):
            H.append(np.r_[np.zeros(n), g])
            h.append(hi)
        if np.isfinite(lo):
            H.append(np.r_[np.zeros(n), -g])
            h.append(-lo)
    steady = Polytope(np.array(H).reshape(-1, n + 1), np.array(h))
    front_H, front_h = [], []
    if np.isfinite(Y.upper[0]):
        front_H.append(np.r_[C, d])
        front_h.append(Y.upper[0] - s_hi)
    if np.isfinite(Y.lower[0]):
        front_H.append(np.r_[-C, -d])
        front_h.append(-(Y.lower[0] - s_lo))
    fH, fh = _drop_zero_rows(np.array(front_H), np.array(front_h), EmptyRobustMas)
    current = steady.intersect(Polytope(fH, fh))
    for t in range(1, t_max + 1):
        newH, newh = [], []
        for row, b0 in zip(fH, fh):
            gx, gv = row[:n], row[n]
            if np.linalg.norm(gx) <= 1e-14:
                continue
            for A, b, E in verts:
                s, _ = support(gx @ E)
                newH.append(np.r_[gx @ A, gx @ b + gv])
                newh.append(b0 - s)
        if not newH:
            return Mas(remove_redundant(current), n, 1, t - 1, float(epsilon), kind="polytopic")
        nH, nh = _drop_zero_rows(np.array(newH), np.array(newh), EmptyRobustMas)
        keep = []
        for k in range(nH.shape[0]):
            ok, _ = redundant_against(current, nH[k], nh[k])
            if not ok:
                keep.append(k)
        if not keep:
            try:
                poly = remove_redundant(current)
            except EmptyPolytope as exc:
                raise EmptyRobustMas(str(exc)) from exc
            return Mas(poly, n, 1, t, float(epsilon), kind="polytopic")
        fH, fh = nH[keep], nh[keep]
        current = current.intersect(Polytope(fH, fh))
        if current.is_empty():
            raise EmptyRobustMas("robust admissible set became empty")
    raise NotFinitelyDetermined(f"polytopic set not determined within t_max={t_max}")


def admissible_oracle(S: LinearSystem, x0, u0, Y: Box, horizon=500, tol=1e-9, w=None) -> bool:
    """Brute-force check that a constant input keeps outputs in ``Y`` for ``t <= horizon``."""
    return bool(admissible_oracle_batch(S, np.atleast_2d(x0) if S.n else np.zeros((1, 0)),
                                        np.atleast_2d(u0), Y, horizon, tol, w)[0])


def admissible_oracle_batch(S: LinearSystem, X0, U0, Y: Box, horizon=500, tol=1e-9, w=None) -> np.ndarray:
    """Vectorized oracle over rows of ``X0`` and ``U0``.

    ``w`` optionally gives a disturbance sequence of shape (horizon+1, nd) or
    (N, horizon+1, nd).
    """
    U = np.asarray(U0, dtype=float).reshape(-1, S.m)
    X = np.array(X0, dtype=float).reshape(U.shape[0], S.n)
    ok = np.ones(X.shape[0], dtype=bool)
    BU = U @ S.B.T
    DU = U @ S.D.T
    for t in range(horizon + 1):
        y = X @ S.C.T + DU
        xn = X @ S.A.T + BU
        if w is not None:
            wt = w[t] if np.ndim(w) == 2 else w[:, t]
            y = y + wt @ S.Dw.T
            xn = xn + wt @ S.Bw.T
        ok &= np.all((y <= Y.upper + tol) & (y >= Y.lower - tol), axis=1)
        X = xn
    return ok


def input_interval(mas: Mas, index=0) -> tuple[float, float]:
    """Range of input coordinate ``index`` over the set (projection by LP)."""
    e = np.zeros(mas.poly.dim)
    e[mas.n_x + index] = 1.0
    hi, _ = lp_max(e, mas.poly)
    lo, _ = lp_max(-e, mas.poly)
    return -lo, hi


def input_volume(mas: Mas, samples=10**6, seed=0) -> float:
    """Monte Carlo measure of the admissible constant inputs of a scalar channel.

    The projection of the set onto its input coordinate is an interval; it is
    sampled inside a box padded by 25% on each side.
    """
    if mas.n_u != 1:
        raise ValueError("input volume is defined for single-input sets")
    lo, hi = input_interval(mas)
    pad = 0.25 * (hi - lo)
    proj = Polytope(np.array([[1.0], [-1.0]]), np.array([hi, -lo]))
    return volume_mc(proj, Box([lo - pad], [hi + pad]), samples, seed)


def save_mas(mas: Mas, path) -> None:
    meta = {"n_x": mas.n_x, "n_u": mas.n_u, "t_star": mas.t_star, "epsilon": mas.epsilon, "kind": mas.kind}
    Path(path).write_text("# " + json.dumps(meta) + "\n" + mas.poly.to_text())


def load_mas(path) -> Mas:
    text = Path(path).read_text()
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError("missing metadata header")
    meta = json.loads(first[2:])
    poly = Polytope.from_text(rest, meta["n_x"] + meta["n_u"])
    return Mas(poly, int(meta["n_x"]), int(meta["n_u"]), int(meta["t_star"]), float(meta["epsilon"]),
               meta.get("kind", "nominal"))
