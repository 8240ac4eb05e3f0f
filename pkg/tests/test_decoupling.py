import numpy as np
import pytest

from plants import coupled_tf, coupled_ss, random_ss_plant, random_tf_plant, zpk
from refgov.decoupling import (
    IcCanceller,
    design_tf_diagonal,
    design_tf_identity,
    fw_identity_pair,
    fw_indices,
    fw_pole_assignment_pair,
    ic_cancellation,
    loop_system,
    small_gain_certificate,
)
from refgov.errors import SingularBStar, UnstableInverse, UnstableLoop
from refgov.sysmod import LinearSystem, RationalMatrix, dc_gain, realize, simulate, transfer_matrix

rng0 = np.random.default_rng(11)
ZPTS = 1.2 * np.exp(1j * rng0.uniform(0, 2 * np.pi, 20))


def off_diagonal_ratio(M):
    worst = 0.0
    for z in ZPTS:
        V = M(z)
        off = V - np.diag(np.diag(V))
        worst = max(worst, np.max(np.abs(off)) / np.min(np.abs(np.diag(V))))
    return worst


# -- transfer-function filters ----------------------------------------------------------


@pytest.mark.parametrize("q", [0.05, 0.5])
def test_diagonal_design_coupled_tf(q):
    G = coupled_tf(q)
    dec = design_tf_diagonal(G)
    assert (dec.beta1, dec.beta2) == (1, 1)
    for z in ZPTS:
        target = np.diag([0.9 / (z - 0.2) ** 2, 0.4 / (z - 0.6)]) / z
        assert np.allclose(dec.W(z), target, atol=1e-10)
        assert np.allclose((G @ dec.F)(z), dec.W(z), atol=1e-10)
        assert np.allclose((dec.F_inv @ dec.F)(z), np.eye(2) * z ** -2, atol=1e-8)
    assert off_diagonal_ratio(G @ dec.F) < 1e-7


def test_identity_design_coupled_tf():
    G = coupled_tf(0.05)
    dec = design_tf_identity(G)
    assert dec.beta1 == 2 and dec.beta2 == 0
    for z in ZPTS:
        assert np.allclose((G @ dec.F)(z), np.eye(2) / z ** 2, atol=1e-9)
        assert np.allclose((dec.F_inv @ dec.F)(z), np.eye(2) * z ** -2, atol=1e-8)


def test_trivial_designs():
    I2 = RationalMatrix.identity(2)
    dec = design_tf_identity(I2)
    assert dec.beta1 == 0 and dec.beta2 == 0
    assert np.allclose(dec.F(0.7), np.eye(2))
    g = RationalMatrix([[zpk([], [0.5], 1.0)]])
    dec = design_tf_identity(g)
    assert dec.beta1 == 1
    for z in ZPTS[:5]:
        assert np.isclose(dec.F(z)[0, 0], (z - 0.5) / z)
        assert np.isclose(dec.W(z)[0, 0], 1 / z)
    diag = RationalMatrix.diag([zpk([], [0.5], 1.0), zpk([], [0.3], 2.0)])
    dec = design_tf_diagonal(diag)
    for z in ZPTS[:5]:
        assert np.allclose(dec.F(z), np.eye(2) * z ** -dec.beta1)
        assert np.allclose(dec.F_inv(z), np.eye(2) * z ** -dec.beta2)


def test_unstable_inverse_rejected():
    # nonminimum-phase zero at 2 makes G^-1 unstable
    G = RationalMatrix([[zpk([2.0], [0.5, 0.1], 1.0)]])
    with pytest.raises(UnstableInverse):
        design_tf_identity(G)


@pytest.mark.parametrize("m", [2, 3])
def test_random_tf_designs(m):
    rng = np.random.default_rng(m)
    for _ in range(5):
        G, dec = random_tf_plant(rng, m)
        assert off_diagonal_ratio(G @ dec.F) < 1e-7
        b = dec.beta1 + dec.beta2
        for z in ZPTS[:5]:
            assert np.allclose((dec.F_inv @ dec.F)(z), np.eye(m) * z ** -b, atol=1e-8)


# -- state feedback -----------------------------------------------------------------------------


def test_falb_wolovich_coupled_ss_exact():
    dec = fw_identity_pair(coupled_ss())
    assert dec.d == (0, 0)
    assert np.max(np.abs(dec.Gamma - [[0, 1], [1, 0]])) <= 1e-12
    assert np.max(np.abs(dec.Phi - [[0, -0.1, 0], [-0.1, -1.1, 0.1]])) <= 1e-12


def test_fw_trivial_cases():
    S = LinearSystem(np.diag([0.3, 0.2]), np.eye(2), np.eye(2), np.zeros((2, 2)))
    d, A_star, B_star = fw_indices(S)
    assert d == (0, 0) and np.allclose(B_star, np.eye(2))
    S0 = LinearSystem(np.zeros((2, 2)), np.eye(2), np.eye(2), np.zeros((2, 2)))
    dec = fw_identity_pair(S0)
    assert np.array_equal(dec.Phi, np.zeros((2, 2))) and np.array_equal(dec.Gamma, np.eye(2))
    assert small_gain_certificate(S0, dec) == 0.0
    Sz = LinearSystem(np.diag([0.3, 0.2]), np.eye(2), [[1.0, 0.0], [0.0, 0.0]], np.zeros((2, 2)))
    assert fw_indices(Sz)[0] == (0, 1)
    with pytest.raises(SingularBStar):
        fw_identity_pair(Sz)


def test_zero_pole_matrices_reduce_to_identity_pair():
    a = fw_identity_pair(coupled_ss())
    b = fw_pole_assignment_pair(coupled_ss(), [np.zeros((2, 2))])
    assert np.allclose(a.Phi, b.Phi) and np.allclose(a.Gamma, b.Gamma)
    with pytest.raises(ValueError):
        fw_pole_assignment_pair(coupled_ss(), [np.ones((2, 2))])


def impulse_outputs(S, dec, channel, steps=12):
    cl = dec.closed_loop(S)
    v = np.zeros((steps, S.m))
    v[0, channel] = 1.0
    return simulate(cl, np.zeros(S.n), v)[1]


def test_identity_pair_delay_law():
    S = coupled_ss()
    dec = fw_identity_pair(S)
    for i in range(2):
        Y = impulse_outputs(S, dec, i)
        expect = np.zeros_like(Y)
        expect[dec.d[i] + 1, i] = 1.0
        assert np.max(np.abs(Y - expect)) <= 1e-10


@pytest.mark.parametrize("m", [2, 3])
def test_identity_pair_delay_law_random(m):
    rng = np.random.default_rng(100 + m)
    for _ in range(5):
        S, dec = random_ss_plant(rng, m, "identity")
        for i in range(m):
            Y = impulse_outputs(S, dec, i, steps=S.n + 4)
            expect = np.zeros_like(Y)
            expect[dec.d[i] + 1, i] = 1.0
            assert np.max(np.abs(Y - expect)) <= 1e-10


@pytest.mark.parametrize("p0", [0.9, 0.1])
def test_pole_assignment_coupled_ss(p0):
    S = coupled_ss()
    dec = fw_pole_assignment_pair(S, [np.diag([p0, p0])])
    T = transfer_matrix(dec.closed_loop(S))
    for i in range(2):
        poles = T[i, i].poles
        assert np.min(np.abs(poles - p0)) < 1e-6
        assert T[i, 1 - i].is_zero or np.max(np.abs([T[i, 1 - i](z) for z in ZPTS])) < 1e-9
        Y = impulse_outputs(S, dec, i, steps=30)
        # first-order channel: geometric decay at the assigned pole
        assert np.allclose(Y[2:, i] / Y[1:-1, i], p0, atol=1e-9)


def test_dc_gain_two_ways():
    S = coupled_ss()
    for dec in (fw_identity_pair(S), fw_pole_assignment_pair(S, [np.diag([0.9, 0.9])])):
        Abar = S.A + S.B @ dec.Phi
        formula = S.C @ np.linalg.solve(np.eye(3) - Abar, S.B @ dec.Gamma)
        assert np.allclose(dc_gain(dec.closed_loop(S)), formula, atol=1e-9)
        assert np.allclose(formula, np.diag(np.diag(formula)), atol=1e-12)


def test_certificates_coupled_ss():
    S = coupled_ss()
    assert small_gain_certificate(S, fw_identity_pair(S)) == pytest.approx(1.1, abs=1e-8)
    assert small_gain_certificate(S, fw_pole_assignment_pair(S, [np.diag([0.9, 0.9])])) == pytest.approx(18.0, abs=1e-6)
    assert small_gain_certificate(S, fw_pole_assignment_pair(S, [np.diag([0.1, 0.1])])) == pytest.approx(1 / 0.9, abs=1e-8)
    Q = loop_system(S, fw_identity_pair(S))
    assert Q.m == 2 and Q.p == 2


def test_unstable_loop():
    S = LinearSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    dec = fw_pole_assignment_pair(S, [np.diag([1.5])])
    with pytest.raises(UnstableLoop):
        small_gain_certificate(S, dec)


# -- initial-condition cancellation --------------------------------------------------------------


def test_ic_zero_state():
    G = coupled_tf(0.05)
    assert np.array_equal(ic_cancellation(G, realize(G), np.zeros(6), 10), np.zeros((10, 2)))


def test_ic_siso():
    G = RationalMatrix([[zpk([], [0.5], 1.0)]])
    plant = realize(G)
    x0 = np.ones(plant.n)
    v = np.random.default_rng(0).normal(size=(40, 1))
    c = ic_cancellation(G, plant, x0, 40)
    y_free = simulate(plant, x0, v + c)[1]
    y_ref = simulate(plant, np.zeros(plant.n), v)[1]
    beta = IcCanceller(G, plant, x0).beta
    assert np.allclose(y_free[beta:], y_ref[beta:], atol=1e-8)


def test_ic_cross_coupling_coupled_tf():
    G = coupled_tf(0.05)
    plant = realize(G)
    dec = design_tf_diagonal(G)
    F = realize(dec.F)
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=plant.n)
    steps = 80
    v = np.zeros((steps, 2))
    v[0, 0] = 1.0
    u = simulate(F, np.zeros(F.n), v)[1] + ic_cancellation(G, plant, x0, steps)
    y = simulate(plant, x0, u)[1]
    beta = IcCanceller(G, plant, x0).beta
    assert np.sum(y[beta:, 1] ** 2) < 1e-10
