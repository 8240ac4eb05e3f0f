"""Decoupled reference governor pipelines.

Transfer-function path::

    r -> F_inv -> r' -> scalar governor per channel -> v -> F -> u -> plant

State-feedback path::

    r' = Gamma^-1 (r - Phi x),  v = governors(r'),  u = Gamma v + Phi x

Pipelines are single-owner state machines: call :meth:`step` once per sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.signal import place_poles

from .decoupling import (
    IcCanceller,
    SsDecoupling,
    TfDecoupling,
    design_tf_diagonal,
    design_tf_identity,
    fw_identity_pair,
    fw_pole_assignment_pair,
    small_gain_certificate,
)
from .errors import (
    BothProjectionsInfeasible,
    DimensionMismatch,
    EmptyRobustMas,
    InfeasibleStart,
    SingularGBar,
    SingularTransferMatrix,
    StabilityNotCertified,
    UnstableObserver,
    UnstableVertexLoop,
)
from .governors import ExplicitBank, srg_bank_step, srg_step_explicit
from .mas import DEFAULT_EPSILON, DEFAULT_T_MAX, Mas, build_mas, build_polytopic_mas, build_robust_mas, delay_mas
from .polytope import Box
from .sysmod import LinearSystem, RationalMatrix, make_proper, rational_inverse, realize

OBSERVER_KINDS = ("open_loop", "decoupled_luenberger", "centralized", "measured")


@dataclass
class ObserverConfig:
    """How channel states fed to the governors are obtained.

    Attributes
    ----------
    kind : str
        ``open_loop`` propagates channel models with the admitted inputs;
        ``measured`` also feeds the actual disturbance (exact channel state);
        ``decoupled_luenberger`` corrects each channel with its own output;
        ``centralized`` estimates the plant state from ``measured_outputs``.
    gains : list of arrays or array, optional
        Observer gains (per channel, or one matrix for ``centralized``).
    poles : sequence, optional
        Desired observer poles used when ``gains`` is not given.
    measured_outputs : sequence of int, optional
        Output rows available to the centralized observer (default all).
    warmup : int
        Steps during which ``v`` is held when the plant's initial state is unknown.
    """

    kind: str = "open_loop"
    gains: object = None
    poles: Optional[Sequence[float]] = None
    measured_outputs: Optional[Sequence[int]] = None
    warmup: int = 50

    def __post_init__(self):
        if self.kind not in OBSERVER_KINDS:
            raise ValueError(f"unknown observer kind {self.kind!r}")


def _default_poles(n, poles=None):
    if poles is not None:
        p = np.asarray(poles, dtype=float).reshape(-1)
        if p.size != n:
            raise DimensionMismatch(f"{p.size} observer poles for {n} states")
        return p
    return np.linspace(0.05, 0.3, n) if n > 1 else np.array([0.05])[:n]


def observer_gain(A, C, poles=None):
    """Luenberger gain ``L`` with ``eig(A - L C)`` at ``poles``."""
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, C.shape[0]))
    p = _default_poles(n, poles)
    L = place_poles(A.T, C.T, p).gain_matrix.T
    return L


def _check_observer(A, L, C):
    if A.shape[0] == 0:
        return
    rho = np.max(np.abs(np.linalg.eigvals(A - L @ C)))
    if rho >= 1.0:
        raise UnstableObserver(f"observer error dynamics have spectral radius {rho:.6g}")


class StepRecord(NamedTuple):
    r: np.ndarray
    r_prime: np.ndarray
    v: np.ndarray
    u: np.ndarray
    y: np.ndarray
    kappa: np.ndarray
    obs_err: float


def _split_realization(M: RationalMatrix, m: int) -> LinearSystem:
    """Realize ``[G | G_w]`` and split the input columns into (u, w)."""
    S = realize(M)
    if M.cols == m:
        return S
    return LinearSystem(S.A, S.B[:, :m], S.C, S.D[:, :m], S.B[:, m:], S.D[:, m:])


class _Filter:
    """State-space filter stepped one sample at a time."""

    def __init__(self, S: LinearSystem):
        self.S = S
        self.x = np.zeros(S.n)

    def step(self, u):
        y = self.S.C @ self.x + self.S.D @ u
        self.x = self.S.A @ self.x + self.S.B @ u
        return y


def _hstack_tf(A: RationalMatrix, B: Optional[RationalMatrix]) -> RationalMatrix:
    if B is None:
        return A
    return RationalMatrix.block([[A, B]])


def _bank(pipe, x_list, rp, step):
    if step is srg_step_explicit:
        bank = getattr(pipe, "_explicit", None)
        if bank is None or bank.source is not pipe.mas:
            bank = pipe._explicit = ExplicitBank(pipe.mas)
            bank.source = pipe.mas
        return bank(x_list, pipe.v_prev, rp)
    res = srg_bank_step(pipe.mas, x_list, pipe.v_prev, rp, step)
    return np.concatenate([k.v_new for k in res]), np.array([k.kappa for k in res])


class DrgTfPipeline:
    """Filter-decoupled governor.

    Parameters
    ----------
    G : RationalMatrix
        Square plant (for wide plants, the squarified matrix).
    dec : TfDecoupling
    Y : Box
        Output constraints (infinite bounds for unconstrained outputs).
    observer : ObserverConfig
    epsilon, t_max : MAS construction parameters.
    x0 : array, optional
        Plant initial state in the coordinates of the plant realization.
    x0_known : bool
        Whether ``x0`` is available to the governor.
    G_w : RationalMatrix, optional
        Disturbance-to-output map; with ``W_dist`` the channel sets are robust.
    W_dist : Box, optional
    governed : sequence of bool, optional
        Channels without a governor pass ``r'`` straight through.
    """

    def __init__(self, G: RationalMatrix, dec: TfDecoupling, Y: Box, observer: ObserverConfig | None = None,
                 epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX, x0=None, x0_known=True,
                 G_w: RationalMatrix | None = None, W_dist: Box | None = None, governed=None):
        m = G.rows
        if G.cols != m:
            raise DimensionMismatch("the decoupled plant must be square")
        if Y.dim != m:
            raise DimensionMismatch(f"constraint box has {Y.dim} entries for {m} outputs")
        self.G = G
        self.dec = dec
        self.Y = Y
        self.m = m
        self.cfg = observer or ObserverConfig()
        self.epsilon = epsilon
        self.G_w = G_w
        self.W_dist = W_dist
        if (G_w is None) != (W_dist is None):
            raise ValueError("G_w and W_dist must be given together")
        self.nd = 0 if G_w is None else G_w.cols
        self.governed = [True] * m if governed is None else [bool(g) for g in governed]
        self.plant = _split_realization(_hstack_tf(G, G_w), m)
        self.f = _Filter(realize(dec.F))
        self.finv = _Filter(realize(dec.F_inv))
        self.x0 = np.zeros(self.plant.n) if x0 is None else np.asarray(x0, float).reshape(-1)
        if self.x0.size != self.plant.n:
            raise DimensionMismatch(f"x0 has {self.x0.size} entries, plant has {self.plant.n} states")
        self.x0_known = x0_known
        self._build_channels(t_max)
        self.reset()

    # -- construction ---------------------------------------------------------
    def _channel_model(self, i):
        Wi = self.dec.W[i:i + 1, i:i + 1]
        Gw = None if self.G_w is None else self.G_w[i:i + 1, :]
        return _split_realization(_hstack_tf(Wi, Gw), 1)

    def _augmented(self) -> LinearSystem:
        Fs, P = self.f.S, self.plant
        nf, n = Fs.n, P.n
        A = np.block([[Fs.A, np.zeros((nf, n))], [P.B @ Fs.C, P.A]])
        B = np.vstack([Fs.B, P.B @ Fs.D])
        C = np.hstack([P.D @ Fs.C, P.C])
        D = P.D @ Fs.D
        Bw = np.vstack([np.zeros((nf, P.nd)), P.Bw]) if P.nd else None
        Dw = P.Dw if P.nd else None
        return LinearSystem(A, B, C, D, Bw, Dw)

    def _mas_for(self, S: LinearSystem, i: int, t_max: int):
        Yi = Box(self.Y.lower[i:i + 1], self.Y.upper[i:i + 1])
        if self.W_dist is not None and S.nd:
            return build_robust_mas(S, Yi, self.W_dist, self.epsilon, t_max)
        if self.dec.method == "identity" and self.cfg.kind != "centralized":
            return delay_mas(Yi, S.n)
        return build_mas(S, Yi, self.epsilon, t_max)

    def _build_channels(self, t_max):
        kind = self.cfg.kind
        self.channels: list[Optional[LinearSystem]] = []
        self.mas: list[Optional[Mas]] = []
        self.L = []
        if kind == "centralized":
            aug = self._augmented()
            self.aug = aug
            rows = list(range(self.m)) if self.cfg.measured_outputs is None else list(self.cfg.measured_outputs)
            self.meas = np.asarray(rows, dtype=int)
            Cm = self.plant.C[self.meas]
            L = self.cfg.gains
            L = observer_gain(self.plant.A, Cm, self.cfg.poles) if L is None else np.asarray(L, float).reshape(self.plant.n, -1)
            _check_observer(self.plant.A, L, Cm)
            self.L = [L]
            for i in range(self.m):
                if not self.governed[i]:
                    self.channels.append(None)
                    self.mas.append(None)
                    continue
                Si = LinearSystem(aug.A, aug.B[:, [i]], aug.C[[i]], aug.D[[i]][:, [i]],
                                  aug.Bw if aug.nd else None, aug.Dw[[i]] if aug.nd else None)
                self.channels.append(Si)
                self.mas.append(self._mas_for(Si, i, t_max))
            return
        for i in range(self.m):
            if not self.governed[i]:
                self.channels.append(None)
                self.mas.append(None)
                self.L.append(None)
                continue
            Si = self._channel_model(i)
            self.channels.append(Si)
            self.mas.append(self._mas_for(Si, i, t_max))
            if kind == "decoupled_luenberger":
                g = None if self.cfg.gains is None else self.cfg.gains[i]
                poles = None if self.cfg.poles is None else self.cfg.poles[i]
                L = observer_gain(Si.A, Si.C, poles) if g is None else np.asarray(g, float).reshape(Si.n, 1)
                _check_observer(Si.A, L, Si.C)
                self.L.append(L)
            else:
                self.L.append(None)

    # -- state ------------------------------------------------------------------
    def reset(self, x0=None, xhat0=None):
        """Restart from rest (or from ``x0``); ``xhat0`` overrides observer initial states."""
        if x0 is not None:
            self.x0 = np.asarray(x0, float).reshape(-1)
        self.t = 0
        self.x = self.x0.copy()
        self.f.x = np.zeros(self.f.S.n)
        self.finv.x = np.zeros(self.finv.S.n)
        self.v_prev = np.zeros(self.m)
        engage = self.x0_known and np.any(self.x0) and self.cfg.kind != "centralized"
        self.canceller = IcCanceller(self.G, self.plant, self.x0) if engage else None
        self.hold = 0 if self.x0_known or not np.any(self.x0) else int(self.cfg.warmup)
        if self.cfg.kind == "centralized":
            self.xhat = self.x0.copy() if self.x0_known else np.zeros(self.plant.n)
            if xhat0 is not None:
                self.xhat = np.asarray(xhat0, float).reshape(-1).copy()
            self.truth = None
        else:
            self.truth = [None if S is None else np.zeros(S.n) for S in self.channels]
            self.xhat = [None if S is None else np.zeros(S.n) for S in self.channels]
            if xhat0 is not None:
                self.xhat = [None if e is None else np.asarray(e, float).reshape(-1).copy() for e in xhat0]

    def channel_states(self):
        """State views handed to each channel governor."""
        if self.cfg.kind == "centralized":
            z = np.concatenate([self.f.x, self.xhat])
            return [z] * self.m
        return self.xhat

    def observer_error(self) -> float:
        if self.cfg.kind == "centralized":
            return float(np.linalg.norm(self.xhat - self.x))
        acc = 0.0
        for a, b in zip(self.xhat, self.truth):
            if a is not None:
                acc += float(np.sum((a - b) ** 2))
        return float(np.sqrt(acc))

    def governor_step(self, rp, step=srg_step_explicit):
        """Admitted ``(v, kappa)`` for the filtered reference ``rp``."""
        return _bank(self, self.channel_states(), rp, step)

    def step(self, r, d=None, step=srg_step_explicit) -> StepRecord:
        r = np.asarray(r, dtype=float).reshape(self.m)
        d = np.zeros(self.nd) if d is None else np.asarray(d, float).reshape(self.nd)
        err = self.observer_error()
        rp = self.finv.step(r)
        if self.hold > 0:
            self.hold -= 1
            v = self.v_prev.copy()
            kappa = np.zeros(self.m)
        else:
            v, kappa = self.governor_step(rp, step)
        u = self.f.step(v)
        if self.canceller is not None:
            u = u + self.canceller.step()
        P = self.plant
        y = P.C @ self.x + P.D @ u
        xn = P.A @ self.x + P.B @ u
        if self.nd:
            y = y + P.Dw @ d
            xn = xn + P.Bw @ d
        self._observe(v, u, y, d)
        self.x = xn
        self.v_prev = v
        self.t += 1
        return StepRecord(r, rp, v, u, y, kappa, err)

    def _observe(self, v, u, y, d):
        if self.cfg.kind == "centralized":
            P = self.plant
            ym = y[self.meas]
            innov = ym - P.C[self.meas] @ self.xhat - P.D[self.meas] @ u
            self.xhat = P.A @ self.xhat + P.B @ u + self.L[0] @ innov
            return
        kind = self.cfg.kind
        for i, S in enumerate(self.channels):
            if S is None:
                continue
            vi = v[i:i + 1]
            xt = S.A @ self.truth[i] + S.B @ vi
            if S.nd:
                xt = xt + S.Bw @ d
            xh = self.xhat[i]
            if kind == "measured":
                xh_new = xt
            else:
                xh_new = S.A @ xh + S.B @ vi
                if kind == "decoupled_luenberger":
                    innov = y[i:i + 1] - S.C @ xh - S.D @ vi
                    xh_new = xh_new + self.L[i] @ innov
            self.truth[i] = xt
            self.xhat[i] = xh_new


def build_drg_tf(G: RationalMatrix, Y: Box, method="diagonal", observer: ObserverConfig | None = None,
                 epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX, x0=None, x0_known=True) -> DrgTfPipeline:
    """Design the filters for ``G`` and assemble the pipeline."""
    if method == "diagonal":
        dec = design_tf_diagonal(G)
    elif method == "identity":
        dec = design_tf_identity(G)
    else:
        raise ValueError(f"unknown decoupling method {method!r}")
    return DrgTfPipeline(G, dec, Y, observer, epsilon, t_max, x0, x0_known)


def drg_tf_robust_build(G: RationalMatrix, G_w: RationalMatrix, Y: Box, W_dist: Box, method="diagonal",
                        observer: ObserverConfig | None = None, epsilon=DEFAULT_EPSILON,
                        t_max=DEFAULT_T_MAX) -> DrgTfPipeline:
    """Filter-decoupled governor whose channel sets are robust to ``d in W_dist``.

    The default observer propagates each channel with the actual disturbance
    so the governor sees the true channel state.
    """
    if G_w.rows != G.rows:
        raise DimensionMismatch("G_w must have one row per output")
    if W_dist.dim != G_w.cols:
        raise DimensionMismatch("disturbance box width differs from G_w columns")
    dec = design_tf_diagonal(G) if method == "diagonal" else design_tf_identity(G)
    return DrgTfPipeline(G, dec, Y, observer or ObserverConfig("measured"), epsilon, t_max,
                         G_w=G_w, W_dist=W_dist)


class DrgSsPipeline:
    """State-feedback-decoupled governor with full-state channel sets."""

    def __init__(self, model: LinearSystem, dec: SsDecoupling, mas_list: list, x0=None, plant: LinearSystem | None = None):
        self.model = model
        self.dec = dec
        self.mas = mas_list
        self.m = model.m
        self.plant = plant or model
        self.Gamma_inv = np.linalg.inv(dec.Gamma)
        self.x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, float).reshape(-1)
        self.certificate = None
        self.reset()

    def reset(self, x0=None, plant: LinearSystem | None = None):
        if x0 is not None:
            self.x0 = np.asarray(x0, float).reshape(-1)
        if plant is not None:
            self.plant = plant
        self.x = self.x0.copy()
        self.v_prev = np.zeros(self.m)
        self.t = 0

    def governor_step(self, rp, step=srg_step_explicit):
        return _bank(self, [self.x] * self.m, rp, step)

    def step(self, r, d=None, step=srg_step_explicit) -> StepRecord:
        r = np.asarray(r, dtype=float).reshape(self.m)
        P = self.plant
        d = np.zeros(P.nd) if d is None else np.asarray(d, float).reshape(P.nd)
        rp = self.Gamma_inv @ (r - self.dec.Phi @ self.x)
        v, kappa = self.governor_step(rp, step)
        u = self.dec.Gamma @ v + self.dec.Phi @ self.x
        y = P.C @ self.x + P.D @ u
        xn = P.A @ self.x + P.B @ u
        if P.nd:
            y = y + P.Dw @ d
            xn = xn + P.Bw @ d
        self.x = xn
        self.v_prev = v
        self.t += 1
        return StepRecord(r, rp, v, u, y, kappa, 0.0)


def _ss_pair(S: LinearSystem, method, M):
    if method == "identity":
        return fw_identity_pair(S)
    if method == "pole":
        if M is None:
            raise ValueError("pole assignment needs the M_k list")
        return fw_pole_assignment_pair(S, M)
    raise ValueError(f"unknown decoupling method {method!r}")


def _certify(S, dec):
    cert = small_gain_certificate(S, dec)
    if cert >= 1.0:
        warnings.warn(f"small-gain value {cert:.4g} >= 1; BIBO stability not certified",
                      StabilityNotCertified, stacklevel=3)
    return cert


def build_drg_ss(S: LinearSystem, Y: Box, method="identity", M=None, epsilon=DEFAULT_EPSILON,
                 t_max=DEFAULT_T_MAX, x0=None) -> DrgSsPipeline:
    """Nominal state-feedback-decoupled governor.

    The identity pair turns every channel into a pure delay whose set does
    not depend on the state; the pole-assignment pair uses full-state sets.
    """
    if Y.dim != S.p:
        raise DimensionMismatch(f"constraint box has {Y.dim} entries for {S.p} outputs")
    dec = _ss_pair(S, method, M)
    cert = _certify(S, dec)
    mas_list = []
    for i in range(S.m):
        Yi = Box(Y.lower[i:i + 1], Y.upper[i:i + 1])
        if method == "identity":
            mas_list.append(delay_mas(Yi, S.n))
        else:
            mas_list.append(build_mas(dec.channel(S, i), Yi, epsilon, t_max))
    p = DrgSsPipeline(S, dec, mas_list, x0)
    p.certificate = cert
    return p


def drg_ss_robust_build(S: LinearSystem, dec: SsDecoupling, Y: Box, W_dist: Box, epsilon=DEFAULT_EPSILON,
                        t_max=DEFAULT_T_MAX, x0=None) -> DrgSsPipeline:
    """State-feedback governor with channel sets robust to ``d in W_dist``."""
    if S.nd == 0:
        raise ValueError("model has no disturbance channels")
    cert = _certify(S, dec)
    mas_list = []
    for i in range(S.m):
        Yi = Box(Y.lower[i:i + 1], Y.upper[i:i + 1])
        mas_list.append(build_robust_mas(dec.channel(S, i), Yi, W_dist, epsilon, t_max))
    p = DrgSsPipeline(S, dec, mas_list, x0)
    p.certificate = cert
    return p


def vbar_bounds(vertices, C, dec: SsDecoupling, Y: Box, epsilon=DEFAULT_EPSILON) -> Box:
    """Range of each admitted input implied by every vertex's steady-state gain."""
    m = dec.Gamma.shape[0]
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for A, B in vertices:
        Abar = A + B @ dec.Phi
        Bbar = B @ dec.Gamma
        n = Abar.shape[0]
        G0 = C @ np.linalg.solve(np.eye(n) - Abar, Bbar)
        for k in range(m):
            g = G0[k, k]
            a, b = (1 - epsilon) * Y.lower[k], (1 - epsilon) * Y.upper[k]
            if abs(g) < 1e-14:
                continue
            with np.errstate(invalid="ignore"):
                ends = np.array([a / g, b / g])
            lo[k] = max(lo[k], np.nanmin(ends))
            hi[k] = min(hi[k], np.nanmax(ends))
    if np.any(lo >= hi):
        raise EmptyRobustMas("no input satisfies every vertex's steady-state constraint")
    return Box(lo, hi)


def param_uncertain_build(vertices, C, nominal: int, Y: Box, epsilon=DEFAULT_EPSILON, method="identity", M=None,
                          t_max=DEFAULT_T_MAX, x0=None) -> DrgSsPipeline:
    """State-feedback governor robust to polytopic ``(A, B)`` uncertainty.

    The nominal vertex is decoupled; on the others the remaining coupling is
    treated as a bounded input ``vbar`` whose range follows from the
    steady-state constraints of every channel.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    verts = [(np.asarray(A, float), np.asarray(B, float)) for A, B in vertices]
    A0, B0 = verts[nominal]
    m = B0.shape[1]
    S0 = LinearSystem(A0, B0, C, np.zeros((C.shape[0], m)))
    dec = _ss_pair(S0, method, M)
    closed = []
    for j, (A, B) in enumerate(verts):
        Abar = A + B @ dec.Phi
        if np.max(np.abs(np.linalg.eigvals(Abar))) >= 1.0:
            raise UnstableVertexLoop(f"vertex {j} closed loop is not stable")
        closed.append((Abar, B @ dec.Gamma))
    vb = vbar_bounds(verts, C, dec, Y, epsilon)
    mas_list = []
    for i in range(m):
        others = [k for k in range(m) if k != i]
        vlist = [(Ab, Bb[:, i], Bb[:, others]) for Ab, Bb in closed]
        dist = Box(vb.lower[others], vb.upper[others])
        Yi = Box(Y.lower[i:i + 1], Y.upper[i:i + 1])
        mas_list.append(build_polytopic_mas(vlist, C[i], Yi, dist, epsilon, t_max))
    p = DrgSsPipeline(S0, dec, mas_list, x0)
    p.vbar = vb
    return p


# -- non-square plants ----------------------------------------------------------


class WideSquare(NamedTuple):
    G_tilde: RationalMatrix
    W: RationalMatrix
    F: RationalMatrix
    F_inv: RationalMatrix


def squarify_wide(G: RationalMatrix, G_bar: RationalMatrix, G_bar_w: RationalMatrix) -> WideSquare:
    """Square up a plant with more inputs than outputs by adding fictitious outputs.

    ``G_tilde = [[G_a, G_b], [0, G_bar]]`` with ``G_a`` the first ``p``
    columns.  ``W = diag(G_11..G_pp, G_bar_w)`` and ``F = G_tilde^-1 W`` is
    formed blockwise.  Neither ``F`` nor ``F_inv`` is delay-padded here.
    """
    p, m = G.shape
    k = m - p
    if k <= 0:
        raise DimensionMismatch("plant must have more inputs than outputs")
    if G_bar.shape != (k, k) or G_bar_w.shape != (k, k):
        raise DimensionMismatch(f"G_bar and G_bar_w must be {k}x{k}")
    try:
        Gbar_inv = rational_inverse(G_bar)
    except SingularTransferMatrix as exc:
        raise SingularGBar("fictitious block is singular") from exc
    Ga = G[:, list(range(p))]
    Gb = G[:, list(range(p, m))]
    Ga_inv = rational_inverse(Ga)
    Wp = RationalMatrix.diag([G[i, i] for i in range(p)])
    zero_kp = RationalMatrix.from_array(np.zeros((k, p)))
    zero_pk = RationalMatrix.from_array(np.zeros((p, k)))
    G_tilde = RationalMatrix.block([[Ga, Gb], [zero_kp, G_bar]])
    W = RationalMatrix.block([[Wp, zero_pk], [zero_kp, G_bar_w]])
    Gbi_w = Gbar_inv @ G_bar_w
    F = RationalMatrix.block([[Ga_inv @ Wp, -(Ga_inv @ Gb @ Gbi_w)], [zero_kp, Gbi_w]])
    Wp_inv = RationalMatrix.diag([G[i, i].reciprocal() for i in range(p)])
    Gbw_inv = rational_inverse(G_bar_w)
    F_inv = RationalMatrix.block([[Wp_inv @ Ga, Wp_inv @ Gb], [zero_kp, Gbw_inv @ G_bar]])
    return WideSquare(G_tilde, W, F, F_inv)


def build_drg_tf_wide(G: RationalMatrix, G_bar: RationalMatrix, G_bar_w: RationalMatrix, Y: Box,
                      epsilon=DEFAULT_EPSILON, t_max=DEFAULT_T_MAX) -> DrgTfPipeline:
    """Governor for a wide plant: only the ``p`` real outputs get governors."""
    p, m = G.shape
    sq = squarify_wide(G, G_bar, G_bar_w)
    F, beta1 = make_proper(sq.F)
    F_inv, beta2 = make_proper(sq.F_inv)
    dec = TfDecoupling(F, F_inv, sq.W.times_zpow(-beta1), beta1, beta2, "diagonal")
    Yfull = Box(np.r_[Y.lower, np.full(m - p, -np.inf)], np.r_[Y.upper, np.full(m - p, np.inf)])
    return DrgTfPipeline(sq.G_tilde, dec, Yfull, ObserverConfig("open_loop"), epsilon, t_max,
                         governed=[True] * p + [False] * (m - p))


def tall_fuse_step(drg_mas, x_list, srg_mas: Mas, x_p, v_prev, r_prime, strategy="min_kappa"):
    """Fuse per-channel governors on the square part with one vector governor on the rest.

    Parameters
    ----------
    drg_mas : list of Mas
        Scalar channel sets of the decoupled square part.
    x_list : list of arrays
        Channel state views.
    srg_mas : Mas
        Set over ``(x_p, v)`` for the remaining outputs (``v`` is m-dimensional).
    strategy : {"min_kappa", "projection"}

    Returns
    -------
    (ndarray, ndarray)
        Fused input and the gain list ``(kappa_1, .., kappa_m, kappa_{m+1})``.
    """
    v_prev = np.asarray(v_prev, float).reshape(-1)
    r_prime = np.asarray(r_prime, float).reshape(-1)
    d = r_prime - v_prev
    try:
        bank = srg_bank_step(drg_mas, x_list, v_prev, r_prime)
        vec = srg_step_explicit(srg_mas, x_p, v_prev, r_prime)
    except InfeasibleStart as exc:
        if strategy == "projection":
            raise BothProjectionsInfeasible(str(exc)) from exc
        raise
    kappas = np.array([k.kappa for k in bank] + [vec.kappa])
    kbar = float(kappas.min())
    v_min = r_prime.copy() if kbar == 1.0 else v_prev + kbar * d
    if strategy == "min_kappa":
        return v_min, kappas
    if strategy != "projection":
        raise ValueError(f"unknown fusion strategy {strategy!r}")
    # Point of the scalar-channel output closest to the remaining set, along the segment.
    v_s = np.concatenate([k.v_new for k in bank])
    k1 = srg_step_explicit(srg_mas, x_p, v_prev, v_s)
    v_t1 = k1.v_new
    # Along the segment toward the vector governor's output, each channel admits
    # kappa_i / kappa_{m+1} of it, so the shared step reduces to the min-kappa point.
    v_t2 = v_min
    if np.linalg.norm(r_prime - v_t1) < np.linalg.norm(r_prime - v_t2):
        return v_t1, kappas
    return v_t2, kappas


class TallDrgPipeline:
    """Governor for a plant with more outputs than inputs.

    The first ``m`` outputs are decoupled with the diagonal method; the rest
    are handled by one vector governor over their filtered model.
    """

    def __init__(self, G: RationalMatrix, Y: Box, strategy="min_kappa", epsilon=DEFAULT_EPSILON,
                 t_max=DEFAULT_T_MAX):
        p, m = G.shape
        if p <= m:
            raise DimensionMismatch("plant must have more outputs than inputs")
        self.m, self.p = m, p
        self.strategy = strategy
        Gm = G[list(range(m)), :]
        Gp = G[list(range(m, p)), :]
        dec = design_tf_diagonal(Gm)
        self.dec = dec
        self.plant = realize(G)
        self.f = _Filter(realize(dec.F))
        self.finv = _Filter(realize(dec.F_inv))
        self.channels = [realize(dec.W[i:i + 1, i:i + 1]) for i in range(m)]
        self.mas = [build_mas(S, Box(Y.lower[i:i + 1], Y.upper[i:i + 1]), epsilon, t_max)
                    for i, S in enumerate(self.channels)]
        self.Wp = realize(Gp @ dec.F)
        self.mas_p = build_mas(self.Wp, Box(Y.lower[m:], Y.upper[m:]), epsilon, t_max)
        self.reset()

    def reset(self):
        self.x = np.zeros(self.plant.n)
        self.f.x = np.zeros(self.f.S.n)
        self.finv.x = np.zeros(self.finv.S.n)
        self.xc = [np.zeros(S.n) for S in self.channels]
        self.xp = np.zeros(self.Wp.n)
        self.v_prev = np.zeros(self.m)
        self.t = 0

    def fuse(self, rp, strategy=None):
        return tall_fuse_step(self.mas, self.xc, self.mas_p, self.xp, self.v_prev, rp, strategy or self.strategy)

    def step(self, r) -> StepRecord:
        r = np.asarray(r, float).reshape(self.m)
        rp = self.finv.step(r)
        v, kappas = self.fuse(rp)
        u = self.f.step(v)
        P = self.plant
        y = P.C @ self.x + P.D @ u
        self.x = P.A @ self.x + P.B @ u
        self.xc = [S.A @ x + S.B @ v[i:i + 1] for i, (S, x) in enumerate(zip(self.channels, self.xc))]
        self.xp = self.Wp.A @ self.xp + self.Wp.B @ v
        self.v_prev = v
        self.t += 1
        return StepRecord(r, rp, v, u, y, kappas, 0.0)
