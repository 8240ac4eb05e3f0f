import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plants import coupled_tf
from refgov.decoupling import design_tf_diagonal
from refgov.errors import DimensionMismatch, InfeasibleStart
from refgov.governors import (
    ExplicitBank,
    GovernorState,
    StepTimer,
    srg_bank_step,
    srg_step_explicit,
    srg_step_lp,
    vrg_step,
)
from refgov.mas import Mas, build_mas, delay_mas
from refgov.polytope import Box, Polytope
from refgov.sysmod import LinearSystem, realize


def state_free(H, h, n_u=1):
    return Mas(Polytope(np.asarray(H, float), np.asarray(h, float)), 0, n_u, 0, 0.0)


def channel_sets(q=0.05):
    dec = design_tf_diagonal(coupled_tf(q))
    sys_ = [realize(dec.W[i:i + 1, i:i + 1]) for i in range(2)]
    return sys_, [build_mas(S, Box([-b], [b])) for S, b in zip(sys_, (1.2, 3.9))]


SYS, SETS = channel_sets()


def member(rng, mas, scale=3.0):
    while True:
        z = rng.uniform(-scale, scale, mas.poly.dim)
        if mas.poly.contains(z, 0.0):
            return z[:mas.n_x], z[mas.n_x:]


# -- scalar governor -----------------------------------------------------------------


def test_hand_example():
    M = state_free([[1.0]], [1.0])
    for step in (srg_step_explicit, srg_step_lp):
        res = step(M, np.zeros(0), [0.0], [2.0])
        assert res.kappa == pytest.approx(0.5)
        assert res.v_new == pytest.approx([1.0])
        assert res.binding_row == 0


def test_admissible_reference_passes():
    M = state_free([[1.0], [-1.0]], [1.0, 1.0])
    res = srg_step_explicit(M, np.zeros(0), [0.2], [0.7])
    assert res.kappa == 1.0 and res.v_new[0] == 0.7 and res.binding_row is None


def test_fixed_point():
    M = state_free([[1.0]], [1.0])
    for step in (srg_step_explicit, srg_step_lp):
        res = step(M, np.zeros(0), [0.4], [0.4])
        assert res.kappa == 1.0 and res.v_new[0] == 0.4


def test_infeasible_start():
    M = state_free([[1.0]], [1.0])
    with pytest.raises(InfeasibleStart) as info:
        srg_step_explicit(M, np.zeros(0), [1.5], [0.0], channel=3)
    assert info.value.channel == 3
    # microscopic violations within the tolerance are accepted
    assert srg_step_explicit(M, np.zeros(0), [1.0 + 1e-9], [0.0]).v_new[0] == 0.0
    with pytest.raises(DimensionMismatch):
        srg_step_explicit(M, np.zeros(0), [0.0, 0.0], [0.0])


@given(st.integers(0, 10**6), st.integers(0, 1))
@settings(max_examples=150, deadline=None)
def test_explicit_matches_lp_and_stays_admissible(seed, i):
    rng = np.random.default_rng(seed)
    mas, S = SETS[i], SYS[i]
    x, v = member(rng, mas)
    r = rng.uniform(-8, 8, 1)
    a = srg_step_explicit(mas, x, v, r)
    b = srg_step_lp(mas, x, v, r)
    assert 0.0 <= a.kappa <= 1.0
    assert abs(a.kappa - b.kappa) <= 1e-9
    assert np.allclose(a.v_new, b.v_new, atol=1e-9)
    assert np.allclose(a.v_new, v + a.kappa * (r - v), atol=1e-12)
    # recursive feasibility: the successor pair is still admissible
    xn = S.A @ x + S.B @ a.v_new
    assert mas.contains(xn, a.v_new, 1e-9)


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_kappa_monotone_in_step_size(seed):
    rng = np.random.default_rng(seed)
    mas = SETS[0]
    x, v = member(rng, mas)
    d = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 4.0)
    k1 = srg_step_explicit(mas, x, v, v + d).kappa
    k2 = srg_step_explicit(mas, x, v, v + 2 * d).kappa
    assert k2 <= k1 + 1e-12


def test_v_below_reference_for_positive_steps():
    # hold r' = 1 on the W11 channel: v climbs toward r' from below
    S, mas = SYS[0], SETS[0]
    x, v = np.zeros(S.n), np.zeros(1)
    for _ in range(100):
        res = srg_step_explicit(mas, x, v, [1.0])
        assert res.v_new[0] <= 1.0
        x = S.A @ x + S.B @ res.v_new
        v = res.v_new
    assert v[0] == pytest.approx(0.8448, abs=1e-9)


def test_state_free_converges_in_one_step():
    M = delay_mas(Box([-1], [1]), 2)
    res = srg_step_explicit(M, np.ones(2), [0.0], [3.0])
    assert res.v_new[0] == 1.0
    again = srg_step_explicit(M, np.ones(2), res.v_new, [3.0])
    assert again.v_new[0] == 1.0 and again.kappa == 0.0


# -- vector governor -------------------------------------------------------------------


def test_vrg_toy():
    M = state_free([[1.0, 1.0]], [1.0], n_u=2)
    u, k = vrg_step(M, np.zeros(0), [0.0, 0.0], [1.0, 1.0])
    assert np.allclose(u, [0.5, 0.5], atol=1e-12) and np.allclose(k, [0.5, 0.5])
    u, k = vrg_step(M, np.zeros(0), [0.0, 0.0], [0.3, 0.2])
    assert np.array_equal(u, [0.3, 0.2]) and np.array_equal(k, [1.0, 1.0])
    u, k = vrg_step(M, np.zeros(0), [0.2, 0.1], [0.2, 0.1])
    assert np.array_equal(u, [0.2, 0.1])


def test_vrg_moves_free_channel_fully():
    # only u1 is constrained: the QP keeps kappa_2 = 1
    M = state_free([[1.0, 0.0]], [0.5], n_u=2)
    u, k = vrg_step(M, np.zeros(0), [0.0, 0.0], [1.0, 1.0])
    assert np.allclose(u, [0.5, 1.0])


@pytest.fixture(scope="module")
def mimo_set():
    S = realize(coupled_tf(0.05))
    return S, build_mas(S, Box([-1.2, -3.9], [1.2, 3.9]))


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_vrg_dominates_scalar(mimo_set, seed):
    S, mas = mimo_set
    rng = np.random.default_rng(seed)
    x, u = member(rng, mas, scale=1.0)
    r = rng.uniform(-4, 4, 2)
    uv, k = vrg_step(mas, x, u, r)
    us = srg_step_explicit(mas, x, u, r).v_new
    assert mas.contains(x, uv, 1e-8)
    assert np.all((k >= 0) & (k <= 1))
    assert np.linalg.norm(uv - r) <= np.linalg.norm(us - r) + 1e-9


# -- banks ---------------------------------------------------------------------------------


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_explicit_bank_matches_channel_loop(seed):
    rng = np.random.default_rng(seed)
    xs, vp = [], []
    for mas in SETS:
        x, v = member(rng, mas)
        xs.append(x)
        vp.append(v[0])
    vp = np.array(vp)
    r = rng.uniform(-6, 6, 2)
    ref = srg_bank_step(SETS, xs, vp, r)
    v, k = ExplicitBank(SETS)(xs, vp, r)
    assert np.array_equal(v, np.concatenate([c.v_new for c in ref]))
    assert np.array_equal(k, [c.kappa for c in ref])


def test_bank_independence_and_passthrough():
    sets = [delay_mas(Box([-1], [1]), 0), delay_mas(Box([-1], [1]), 0), None]
    res = srg_bank_step(sets, [np.zeros(0)] * 3, np.zeros(3), [2.0, 0.5, 7.0])
    assert [c.kappa for c in res] == [0.5, 1.0, 1.0]
    assert [c.v_new[0] for c in res] == [1.0, 0.5, 7.0]
    v, k = ExplicitBank(sets)([np.zeros(0)] * 3, np.zeros(3), np.array([2.0, 0.5, 7.0]))
    assert list(v) == [1.0, 0.5, 7.0] and list(k) == [0.5, 1.0, 1.0]


def test_bank_reports_channel():
    sets = [delay_mas(Box([-1], [1]), 0)] * 2
    with pytest.raises(InfeasibleStart) as info:
        srg_bank_step(sets, [np.zeros(0)] * 2, np.array([0.0, 3.0]), np.zeros(2))
    assert info.value.channel == 1
    with pytest.raises(InfeasibleStart):
        ExplicitBank(sets)([np.zeros(0)] * 2, np.array([0.0, 3.0]), np.zeros(2))


def test_bank_rejects_multi_input_sets():
    M = state_free([[1.0, 1.0]], [1.0], n_u=2)
    with pytest.raises(DimensionMismatch):
        ExplicitBank([M])


def test_state_and_timer():
    assert np.array_equal(GovernorState.zeros(3).v_prev, np.zeros(3))
    ticks = iter([0.0, 0.5, 1.0, 3.0])
    timer = StepTimer(clock=lambda: next(ticks))
    f = timer.wrap(lambda a: a + 1)
    assert f(1) == 2 and f(2) == 3
    assert timer.samples == [0.5, 2.0]
    timer.reset()
    assert timer.samples == []
