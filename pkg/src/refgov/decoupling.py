"""Decoupling designers.

Transfer-function filters turn ``G`` into a diagonal ``W = G F``; state
feedback ``u = Phi x + Gamma v`` makes each output depend on one new input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularBStar, SingularTransferMatrix, UnstableInverse, UnstableLoop, UnstableSystem
from .sysmod import (
    LinearSystem,
    RationalMatrix,
    RationalTf,
    l1_impulse_norm,
    make_proper,
    rational_inverse,
    realize,
)

STABLE_MARGIN = 1e-6
MARKOV_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TfDecoupling:
    """Filters ``F`` (before the plant) and ``F_inv`` (on the reference).

    ``G @ F == W`` and ``F_inv @ F == z**-(beta1 + beta2) I``.
    """

    F: RationalMatrix
    F_inv: RationalMatrix
    W: RationalMatrix
    beta1: int
    beta2: int
    method: str


def _check_stable(M: RationalMatrix, what):
    p = M.poles()
    if p.size and np.max(np.abs(p)) >= 1.0 - STABLE_MARGIN:
        raise UnstableInverse(f"{what} has a pole of modulus {np.max(np.abs(p)):.6g}")


def design_tf_diagonal(G: RationalMatrix) -> TfDecoupling:
    """Diagonal target ``W = z^-beta1 diag(G_11, ..., G_mm)``."""
    if not G.is_stable():
        raise UnstableSystem("plant has poles outside the open unit disk")
    Gi = rational_inverse(G)
    diag = [G[i, i] for i in range(G.rows)]
    if any(e.is_zero for e in diag):
        raise SingularTransferMatrix("a diagonal entry is identically zero")
    Wd = RationalMatrix.diag(diag)
    Wd_inv = RationalMatrix.diag([e.reciprocal() for e in diag])
    F, beta1 = make_proper(Gi @ Wd)
    F_inv, beta2 = make_proper(Wd_inv @ G)
    _check_stable(F, "F")
    _check_stable(F_inv, "F_inv")
    return TfDecoupling(F, F_inv, Wd.times_zpow(-beta1), beta1, beta2, "diagonal")


def design_tf_identity(G: RationalMatrix) -> TfDecoupling:
    """Target ``W = z^-beta1 I``; the reference filter is the plant itself."""
    if not G.is_stable():
        raise UnstableSystem("plant has poles outside the open unit disk")
    F, beta1 = make_proper(rational_inverse(G))
    F_inv, beta2 = make_proper(G)
    _check_stable(F, "F")
    m = G.rows
    return TfDecoupling(F, F_inv, RationalMatrix.identity(m).times_zpow(-beta1), beta1, beta2, "identity")


@dataclass(frozen=True, eq=False)
class SsDecoupling:
    """State feedback ``u = Phi x + Gamma v``."""

    Phi: np.ndarray
    Gamma: np.ndarray
    d: tuple
    A_star: np.ndarray
    B_star: np.ndarray
    method: str = "identity"
    M: tuple = field(default=())

    def closed_loop(self, S: LinearSystem) -> LinearSystem:
        """Model from ``v`` to ``y`` (disturbance channels carried over)."""
        Abar = S.A + S.B @ self.Phi
        return LinearSystem(Abar, S.B @ self.Gamma, S.C, S.D @ self.Gamma, S.Bw, S.Dw)

    def channel(self, S: LinearSystem, i: int) -> LinearSystem:
        """Full-state model of output ``i`` driven by ``v_i``."""
        cl = self.closed_loop(S)
        return LinearSystem(cl.A, cl.B[:, [i]], cl.C[[i]], cl.D[[i]][:, [i]], cl.Bw, cl.Dw[[i]])


def fw_indices(S: LinearSystem):
    """Relative-degree indices and the matrices ``A*``, ``B*``.

    Returns
    -------
    d : tuple of int
    A_star : (m, n) array
    B_star : (m, m) array
    """
    if np.any(S.D != 0):
        raise ValueError("state-feedback decoupling needs D = 0")
    n = S.n
    d = []
    A_star = np.zeros((S.p, n))
    B_star = np.zeros((S.p, S.m))
    for i in range(S.p):
        row = S.C[i]
        di = n - 1
        for j in range(n):
            if np.max(np.abs(row @ S.B)) > MARKOV_TOL:
                di = j
                break
            row = row @ S.A
        Cd = S.C[i] @ np.linalg.matrix_power(S.A, di)
        d.append(di)
        A_star[i] = Cd @ S.A
        B_star[i] = Cd @ S.B
    return tuple(d), A_star, B_star


def _bstar_inverse(B_star):
    s = np.linalg.svd(B_star, compute_uv=False)
    if s[-1] <= 1e-10 * max(1.0, s[0]):
        raise SingularBStar("decoupling matrix is singular")
    return np.linalg.inv(B_star)


def fw_identity_pair(S: LinearSystem) -> SsDecoupling:
    """Feedback giving ``y_i(t + d_i + 1) = v_i(t)``."""
    d, A_star, B_star = fw_indices(S)
    Binv = _bstar_inverse(B_star)
    return SsDecoupling(-Binv @ A_star, Binv, d, A_star, B_star, "identity")


def fw_pole_assignment_pair(S: LinearSystem, M) -> SsDecoupling:
    """Feedback that also assigns channel poles through diagonal ``M_0..M_delta``.

    Matrices beyond the supplied list are taken as zero.
    """
    d, A_star, B_star = fw_indices(S)
    Binv = _bstar_inverse(B_star)
    delta = max(d)
    m = S.m
    acc = np.zeros_like(A_star)
    CA = S.C.copy()
    Ms = [np.atleast_2d(np.asarray(Mk, dtype=float)) for Mk in M]
    for k in range(delta + 1):
        if k < len(Ms):
            Mk = Ms[k]
            if Mk.shape != (m, m) or np.any(Mk != np.diag(np.diag(Mk))):
                raise ValueError("each M_k must be an m x m diagonal matrix")
            acc = acc + Mk @ CA
        CA = CA @ S.A
    return SsDecoupling(Binv @ (acc - A_star), Binv, d, A_star, B_star, "pole", tuple(Ms))


def loop_system(S: LinearSystem, dec: SsDecoupling) -> LinearSystem:
    """Realization of the feedback-path transfer ``Gamma^-1 Phi (zI - A - B Phi)^-1 B Gamma``."""
    Abar = S.A + S.B @ dec.Phi
    Gi = np.linalg.inv(dec.Gamma)
    return LinearSystem(Abar, S.B @ dec.Gamma, Gi @ dec.Phi, np.zeros((S.m, S.m)))


def small_gain_certificate(S: LinearSystem, dec: SsDecoupling, tail_tol=1e-9) -> float:
    """L1 norm of the feedback-path transfer; values below 1 certify BIBO stability."""
    Q = loop_system(S, dec)
    if not Q.is_stable():
        raise UnstableLoop(f"closed loop spectral radius {Q.spectral_radius():.6g}")
    if not np.any(dec.Phi):
        return 0.0
    return l1_impulse_norm(Q, tail_tol)


class IcCanceller:
    """Additive input that removes the free response of a nonzero initial state.

    With ``beta`` the properness delay of ``G^-1``, the term is
    ``c = -z^-beta G^-1(z) s`` where ``s(t) = C A^(t+beta) x0``; the plant
    output then matches the zero-state response for every ``t >= beta``.
    The first ``beta`` samples cannot be changed by any causal input.
    """

    def __init__(self, G: RationalMatrix, plant: LinearSystem, x0):
        P, beta = make_proper(rational_inverse(G))
        _check_stable(P, "G^-1")
        self.beta = beta
        self.P = realize(P)
        self.plant = plant
        self.xs = np.asarray(x0, dtype=float).reshape(-1).copy()
        self.CAb = plant.C @ np.linalg.matrix_power(plant.A, beta) if plant.n else plant.C
        self.xp = np.zeros(self.P.n)
        self.active = bool(np.any(self.xs))

    def step(self) -> np.ndarray:
        if not self.active:
            return np.zeros(self.P.m)
        s = -(self.CAb @ self.xs)
        c = self.P.C @ self.xp + self.P.D @ s
        self.xp = self.P.A @ self.xp + self.P.B @ s
        self.xs = self.plant.A @ self.xs
        return c


def ic_cancellation(G: RationalMatrix, plant: LinearSystem, x0, steps: int) -> np.ndarray:
    """First ``steps`` samples of the cancellation input, shape (steps, m)."""
    c = IcCanceller(G, plant, x0)
    return np.array([c.step() for _ in range(steps)]).reshape(steps, G.cols)
