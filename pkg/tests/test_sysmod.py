import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import eval_ratio, long_division
from plants import coupled_tf, coupled_ss
from refgov.errors import DimensionMismatch, PoleAtOne, SingularTransferMatrix, UnstableSystem
from refgov.sysmod import (
    LinearSystem,
    RationalMatrix,
    RationalTf,
    dc_gain,
    hinf_norm,
    l1_impulse_norm,
    make_proper,
    markov_parameters,
    minimal_realization,
    rational_inverse,
    realize,
    simulate,
    system_from_dict,
    system_to_dict,
    transfer_matrix,
)

root = st.floats(-0.9, 0.9, allow_nan=False)
gain = st.floats(0.1, 5.0)
points = [1.7, -1.3, 1.1 + 0.6j, 0.3 - 1.4j]


def tf_of(zeros, poles, k):
    return RationalTf.from_zpk(zeros, poles, k)


# -- scalar rational functions -------------------------------------------------


@given(st.lists(root, max_size=2), st.lists(root, min_size=1, max_size=3), gain,
       st.lists(root, max_size=2), st.lists(root, min_size=1, max_size=3), gain)
@settings(max_examples=60, deadline=None)
def test_tf_arithmetic_matches_pointwise(z1, p1, k1, z2, p2, k2):
    a = tf_of(z1, p1, k1)
    b = tf_of(z2, p2, k2)
    for z in points:
        assert np.isclose((a + b)(z), a(z) + b(z), rtol=1e-7, atol=1e-9)
        assert np.isclose((a - b)(z), a(z) - b(z), rtol=1e-7, atol=1e-9)
        assert np.isclose((a * b)(z), a(z) * b(z), rtol=1e-7)
        assert np.isclose((a / b)(z), a(z) / b(z), rtol=1e-7)


def test_tf_evaluation_against_horner():
    g = RationalTf([-0.49, 0.54], [0.9, -1.85, 1.0])
    for z in points:
        assert np.isclose(g(z), eval_ratio([-0.49, 0.54], [0.9, -1.85, 1.0], z))


def test_cancellation_and_degrees():
    g = tf_of([0.5], [0.5, 0.2], 2.0)
    assert g.relative_degree == 1
    assert np.allclose(g.den.coef, [-0.2, 1.0])
    assert tf_of([0.5], [0.5], 3.0)(7.0) == pytest.approx(3.0)
    assert not tf_of([0.1, 0.2], [0.3], 1.0).is_proper
    assert tf_of([], [0.3, 0.1], 1.0).times_zpow(2).relative_degree == 0


def test_zero_and_reciprocal():
    assert (tf_of([], [0.3], 1.0) - tf_of([], [0.3], 1.0)).is_zero
    with pytest.raises(ZeroDivisionError):
        RationalTf([0.0], [1.0]).reciprocal()


# -- rational matrices --------------------------------------------------------------


@pytest.mark.parametrize("q", [0.05, 0.5])
def test_inverse_pointwise(q):
    G = coupled_tf(q)
    Gi = rational_inverse(G)
    for z in points:
        assert np.allclose(G(z) @ Gi(z), np.eye(2), atol=1e-9)


def test_singular_inverse():
    g = tf_of([], [0.5], 1.0)
    with pytest.raises(SingularTransferMatrix):
        rational_inverse(RationalMatrix([[g, g], [g, g]]))


def test_make_proper_coupled_tf():
    # det G has relative degree 3, so G^-1 entries reach relative degree -2;
    # against the diagonal target only one delay is needed
    G = coupled_tf(0.05)
    P, beta = make_proper(rational_inverse(G))
    assert beta == 2 and P.is_proper()
    F, beta1 = make_proper(rational_inverse(G) @ RationalMatrix.diag([G[0, 0], G[1, 1]]))
    assert beta1 == 1 and F.is_proper()
    assert make_proper(G) == (G, 0)


def test_matrix_ops_pointwise():
    G = coupled_tf(0.5)
    H = coupled_tf(0.05)
    for z in points:
        assert np.allclose((G @ H)(z), G(z) @ H(z))
        assert np.allclose((G - H)(z), G(z) - H(z))
        assert np.allclose(G.times_zpow(-2)(z), G(z) / z ** 2)
    assert G[0, 1](2.0) == pytest.approx(0.5 / 3 / (2 + 1 / 3))


# -- realization --------------------------------------------------------------------


@given(st.lists(root, max_size=2), st.lists(root, min_size=1, max_size=4), gain, st.integers(0, 2))
@settings(max_examples=40, deadline=None)
def test_siso_realization_markov_matches_long_division(zeros, poles, k, delay):
    zeros = zeros[:len(poles)]
    g = tf_of(zeros, poles, k).times_zpow(-delay)
    S = realize(RationalMatrix([[g]]))
    ref = long_division(g.num.coef, g.den.coef, 12)
    got = markov_parameters(S, 12)[:, 0, 0]
    assert np.allclose(got, ref, atol=1e-9 * max(1.0, np.max(np.abs(ref))))


def test_mimo_realization_markov_entrywise():
    G = coupled_tf(0.05)
    S = realize(G)
    M = markov_parameters(S, 10)
    for i in range(2):
        for j in range(2):
            e = G[i, j]
            assert np.allclose(M[:, i, j], long_division(e.num.coef, e.den.coef, 10), atol=1e-12)


def test_realization_orders():
    G = coupled_tf(0.05)
    # each column shares no poles, so the order is the sum of entry orders
    assert realize(G).n == 6
    W11 = G[0, 0].times_zpow(-1)
    S = realize(RationalMatrix([[W11]]))
    assert S.n == 3
    assert np.allclose(markov_parameters(S, 6)[:, 0, 0], [0, 0, 0, 0.9, 0.36, 0.108])


def test_transfer_matrix_round_trip():
    G = coupled_tf(0.5)
    G2 = transfer_matrix(realize(G))
    for z in points:
        assert np.allclose(G(z), G2(z))


def test_minimal_realization_removes_uncontrollable_mode():
    A = np.diag([0.5, 0.3])
    S = LinearSystem(A, [[1.0], [0.0]], [[1.0, 1.0]], [[0.0]])
    R = minimal_realization(S)
    assert R.n == 1
    assert np.allclose(markov_parameters(R, 8), markov_parameters(S, 8))


# -- gains and norms ------------------------------------------------------------------


@pytest.mark.parametrize("q", [0.05, 0.5])
def test_dc_gain_coupled_tf(q):
    assert np.allclose(dc_gain(realize(coupled_tf(q))), [[1.40625, q / 4], [3.0, 1.0]])


def test_dc_gain_coupled_ss():
    G0 = dc_gain(coupled_ss())
    A = np.array(coupled_ss().A)
    ref = np.array(coupled_ss().C) @ np.linalg.inv(np.eye(3) - A) @ np.array(coupled_ss().B)
    assert np.allclose(G0, ref)


def test_dc_gain_pole_at_one():
    with pytest.raises(PoleAtOne):
        dc_gain(LinearSystem([[1.0]], [[1.0]], [[1.0]], [[0.0]]))


@given(st.floats(-0.95, 0.95).filter(lambda p: abs(p) > 1e-3), st.floats(0.1, 3.0))
@settings(max_examples=30, deadline=None)
def test_first_order_norms(p, k):
    S = LinearSystem([[p]], [[1.0]], [[k]], [[0.0]])
    ref = k / (1.0 - abs(p))
    assert hinf_norm(S) == pytest.approx(ref, rel=1e-6)
    assert l1_impulse_norm(S) == pytest.approx(ref, rel=1e-6)


def test_norm_ordering_mimo():
    S = realize(coupled_tf(0.05))
    # H-infinity never exceeds the L1 (peak-to-peak) gain bound times sqrt of the width
    assert hinf_norm(S) <= np.sqrt(2) * l1_impulse_norm(S) + 1e-9
    assert hinf_norm(S) >= np.linalg.svd(dc_gain(S), compute_uv=False)[0] - 1e-9


def test_norms_reject_unstable():
    S = LinearSystem([[1.2]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(UnstableSystem):
        hinf_norm(S)
    with pytest.raises(UnstableSystem):
        l1_impulse_norm(S)


# -- state-space container and simulation -----------------------------------------------


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        LinearSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    with pytest.raises(DimensionMismatch):
        LinearSystem(np.eye(2), np.ones((2, 1)), np.ones((2, 1)), np.zeros((1, 1)))
    with pytest.raises(DimensionMismatch):
        LinearSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1)), np.ones((3, 1)))
    S = coupled_ss()
    with pytest.raises(ValueError):
        S.A[0, 0] = 5.0


def test_simulate_shapes_and_values():
    S = LinearSystem([[0.5]], [[1.0]], [[2.0]], [[0.0]])
    X, Y = simulate(S, [1.0], np.ones(4))
    assert X.shape == (5, 1) and Y.shape == (4, 1)
    assert np.allclose(Y[:, 0], 2 * np.array([1.0, 1.5, 1.75, 1.875]))


def test_system_dict_round_trip():
    for sys_ in (coupled_tf(0.05), coupled_ss(True)):
        back = system_from_dict(system_to_dict(sys_))
        if isinstance(sys_, RationalMatrix):
            for z in points:
                assert np.allclose(back(z), sys_(z))
        else:
            assert np.array_equal(back.A, sys_.A) and np.array_equal(back.Bw, sys_.Bw)
