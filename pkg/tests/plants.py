"""Example plants and seeded random plant generators shared by the tests."""

import numpy as np

from refgov.decoupling import design_tf_diagonal, fw_identity_pair, fw_pole_assignment_pair
from refgov.errors import RefGovError
from refgov.polytope import Box
from refgov.sysmod import LinearSystem, RationalMatrix, RationalTf

zpk = RationalTf.from_zpk

Y_TF = Box([-1.2, -3.9], [1.2, 3.9])
Y_SS = Box([-np.inf, -np.inf], [2.1, 1.1])


def coupled_tf(q, underdamped=False):
    """Two-input coupled plant with coupling gain q."""
    if underdamped:
        g11 = RationalTf([-0.49, 0.54], [0.9, -1.85, 1.0])
    else:
        g11 = zpk([], [0.2, 0.2], 0.9)
    return RationalMatrix([
        [g11, zpk([], [-1 / 3], q / 3)],
        [zpk([], [0.5, 0.5], 0.75), zpk([], [0.6], 0.4)],
    ])


def coupled_tf_disturbance():
    """Disturbance-to-output column used with the q = 0.05 plant."""
    return RationalMatrix([[zpk([], [0.5, 0.5, -1 / 3], 0.2 / 3)], [zpk([], [-0.5, 0.7, 0.7], 0.15)]])


def coupled_ss(disturbed=False):
    A = [[0.1, 1.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]]
    B = [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]
    C = [[1.0, 1.0, -1.0], [0.0, 1.0, 0.0]]
    D = np.zeros((2, 2))
    if disturbed:
        return LinearSystem(A, B, C, D, [[1.3], [0.3], [2.51]], np.zeros((2, 1)))
    return LinearSystem(A, B, C, D)


def random_tf_plant(rng, m, max_tries=500):
    """Stable first-order-entry plant whose diagonal decoupling filters are stable.

    Entries are ``k / (z - p)`` with dominant diagonal gains; draws whose
    filters have poles beyond 0.9 are rejected.
    """
    for _ in range(max_tries):
        rows = []
        for i in range(m):
            row = []
            for j in range(m):
                k = rng.uniform(0.5, 1.5) if i == j else rng.uniform(-0.3, 0.3)
                row.append(zpk([], [rng.uniform(-0.6, 0.8)], k))
            rows.append(row)
        G = RationalMatrix(rows)
        try:
            dec = design_tf_diagonal(G)
        except RefGovError:
            continue
        poles = np.concatenate([dec.F.poles(), dec.F_inv.poles()])
        if poles.size and np.max(np.abs(poles)) > 0.9:
            continue
        return G, dec
    raise RuntimeError("no admissible random plant found")


def random_ss_plant(rng, m, method="identity", max_tries=500):
    """Stable ``(A, B, C)`` with ``n = m + 1`` states whose decoupled loop is stable."""
    n = m + 1
    for _ in range(max_tries):
        lam = rng.uniform(-0.7, 0.7, n)
        T = rng.normal(size=(n, n))
        if abs(np.linalg.det(T)) < 0.2:
            continue
        A = T @ np.diag(lam) @ np.linalg.inv(T)
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(m, n))
        S = LinearSystem(A, B, C, np.zeros((m, m)))
        try:
            if method == "identity":
                dec = fw_identity_pair(S)
            else:
                dec = fw_pole_assignment_pair(S, [np.diag(rng.uniform(0.2, 0.6, m))])
        except RefGovError:
            continue
        cl = dec.closed_loop(S)
        if cl.spectral_radius() > 0.9:
            continue
        G0 = S.C @ np.linalg.solve(np.eye(n) - S.A, S.B)
        W0 = cl.C @ np.linalg.solve(np.eye(n) - cl.A, cl.B)
        if min(np.linalg.svd(G0, compute_uv=False)[-1], np.min(np.abs(np.diag(W0)))) < 0.05:
            continue
        if np.max(np.abs(W0 - np.diag(np.diag(W0)))) > 1e-9:
            continue
        return S, dec
    raise RuntimeError("no admissible random plant found")
