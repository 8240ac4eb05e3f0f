import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import free_response_ok
from plants import Y_SS, coupled_tf, coupled_ss
from refgov.decoupling import design_tf_diagonal, fw_pole_assignment_pair
from refgov.errors import EmptyRobustMas, NotFinitelyDetermined, UnstableSystem
from refgov.mas import (
    admissible_oracle,
    admissible_oracle_batch,
    build_mas,
    build_robust_mas,
    delay_mas,
    input_interval,
    input_volume,
    limit_output_set,
    load_mas,
    output_sets,
    save_mas,
)
from refgov.polytope import Box
from refgov.sysmod import LinearSystem, dc_gain, realize


def channel(q, i):
    dec = design_tf_diagonal(coupled_tf(q))
    return realize(dec.W[i:i + 1, i:i + 1])


W11 = channel(0.05, 0)
W22 = channel(0.05, 1)
Y11 = Box([-1.2], [1.2])
Y22 = Box([-3.9], [3.9])


def static(gain=1.0):
    return LinearSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[gain]])


def test_static_system():
    M = build_mas(static(), Box([-1], [1]))
    assert M.t_star == 0
    assert input_interval(M) == pytest.approx((-0.99, 0.99))


def test_frozen_channel_sets():
    A = build_mas(W11, Y11)
    B = build_mas(W22, Y22)
    assert (A.t_star, A.poly.nrows) == (5, 12)
    assert (B.t_star, B.poly.nrows) == (2, 6)
    # the input range is the tightened steady-state interval
    assert input_interval(A)[1] == pytest.approx(0.99 * 1.2 / 1.40625)
    assert input_interval(B)[1] == pytest.approx(0.99 * 3.9)
    assert A.contains(np.zeros(3), 0.0)


def test_members_pass_oracle_and_outside_points_fail():
    M = build_mas(W22, Y22)
    rng = np.random.default_rng(0)
    Z = rng.uniform(-8, 8, size=(20000, 3))
    inside = Z[M.poly.contains(Z)][:10000]
    assert len(inside) > 1000
    ok = admissible_oracle_batch(W22, inside[:, :2], inside[:, 2:], Y22)
    assert ok.all()
    # boundary points pushed out by 2% either violate or sit within the epsilon band
    bnd = []
    while len(bnd) < 1000:
        z = rng.uniform(-8, 8, 3)
        if not M.contains(z[:2], z[2]):
            continue
        lo, hi = 0.0, 1.0
        d = z
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if M.contains(d[:2] / mid if mid else d[:2], d[2] / mid if mid else d[2]) else (lo, mid)
        bnd.append(d / hi * 1.02 if hi < 1 else d * 1.02)
    bnd = np.array(bnd)
    out = ~M.poly.contains(bnd)
    pts = bnd[out]
    ok = admissible_oracle_batch(W22, pts[:, :2], pts[:, 2:], Y22)
    G0 = dc_gain(W22)[0, 0]
    in_band = np.abs(G0 * pts[:, 2]) > 0.99 * 3.9 - 1e-9
    assert np.all(~ok | in_band)


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_membership_implies_admissible(seed):
    rng = np.random.default_rng(seed)
    M = build_mas(W11, Y11)
    Z = rng.uniform(-3, 3, size=(300, 4))
    for z in Z[M.poly.contains(Z)]:
        assert free_response_ok(W11.A, W11.B, W11.C, W11.D, z[:3], z[3:], Y11.lower, Y11.upper)


def test_completeness_up_to_tightening():
    # oracle-admissible points whose steady output lies in (1 - 2 eps) Y are members
    M = build_mas(W11, Y11)
    rng = np.random.default_rng(1)
    Z = rng.uniform(-2, 2, size=(5000, 4))
    G0 = dc_gain(W11)[0, 0]
    margin = np.abs(G0 * Z[:, 3]) <= 0.98 * 1.2
    ok = admissible_oracle_batch(W11, Z[:, :3], Z[:, 3:], Y11)
    sel = Z[ok & margin]
    assert len(sel) > 100
    assert M.poly.contains(sel, 1e-9).all()


def test_one_sided_constraints():
    dec = fw_pole_assignment_pair(coupled_ss(), [np.diag([0.9, 0.9])])
    for i in range(2):
        ch = dec.channel(coupled_ss(), i)
        M = build_mas(ch, Box(Y_SS.lower[i:i + 1], Y_SS.upper[i:i + 1]))
        assert M.contains(np.zeros(3), -50.0)
        assert not M.contains(np.zeros(3), 50.0)


def test_unstable_and_cap():
    with pytest.raises(UnstableSystem):
        build_mas(LinearSystem([[1.1]], [[1.0]], [[1.0]], [[0.0]]), Box([-1], [1]))
    with pytest.raises(NotFinitelyDetermined):
        # lightly damped oscillation keeps producing new overshoot rows
        c, s = np.cos(0.3), np.sin(0.3)
        A = 0.99 * np.array([[c, -s], [s, c]])
        build_mas(LinearSystem(A, [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]]), Box([-1], [1]), t_max=3)


def test_oracle_trivial_cases():
    assert admissible_oracle(W22, np.zeros(2), [0.0], Y22)
    assert not admissible_oracle(static(), np.zeros(0), [1.5], Box([-1], [1]))


# -- robust sets -------------------------------------------------------------------


def test_robust_zero_disturbance_matches_nominal():
    S = LinearSystem(W22.A, W22.B, W22.C, W22.D, np.ones((2, 1)), np.zeros((1, 1)))
    R = build_robust_mas(S, Y22, Box([0.0], [0.0]))
    N = build_mas(W22, Y22)
    assert np.allclose(R.poly.H, N.poly.H) and np.allclose(R.poly.h, N.poly.h)


def test_robust_static_shrink():
    S = LinearSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]],
                     np.zeros((0, 1)), [[1.0]])
    R = build_robust_mas(S, Box([-1], [1]), Box([-0.1], [0.1]))
    assert input_interval(R) == pytest.approx((-0.891, 0.891))


def test_output_sets_shrink_monotonically():
    S = coupled_ss(True)
    seq = output_sets(S, Y_SS, Box([-0.1], [0.1]), 30)
    for a, b in zip(seq, seq[1:]):
        assert np.all(b.upper <= a.upper + 1e-15)
    lim, steps = limit_output_set(S, Y_SS, Box([-0.1], [0.1]))
    assert np.all(lim.upper <= seq[-1].upper + 1e-12) and steps > 3


def test_robust_subset_of_nominal_coupled_ss():
    S = coupled_ss(True)
    dec = fw_pole_assignment_pair(coupled_ss(), [np.diag([0.1, 0.1])])
    W = Box([-0.1], [0.1])
    rng = np.random.default_rng(2)
    for i in range(2):
        ch = dec.channel(S, i)
        Yi = Box(Y_SS.lower[i:i + 1], Y_SS.upper[i:i + 1])
        R = build_robust_mas(ch, Yi, W)
        N = build_mas(ch, Yi)
        Z = rng.uniform(-4, 4, size=(20000, 4))
        inR = R.poly.contains(Z)
        assert np.all(N.poly.contains(Z[inR]))
        members = Z[inR][:100]
        assert len(members) == 100
        for z in members:
            w = rng.uniform(-0.1, 0.1, size=(20, 501, 1))
            ok = admissible_oracle_batch(ch, np.repeat(z[None, :3], 20, 0), np.full((20, 1), z[3]), Yi, w=w)
            assert ok.all()


def test_robust_empty():
    S = LinearSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]], [[1.0]], [[1.0]])
    with pytest.raises(EmptyRobustMas):
        build_robust_mas(S, Box([-1], [1]), Box([-0.6], [0.6]))


# -- delay sets and persistence ------------------------------------------------------------


def test_delay_mas():
    M = delay_mas(Box([-1], [1]), 4)
    rng = np.random.default_rng(0)
    for x in rng.normal(scale=100, size=(50, 4)):
        assert M.contains(x, 0.3)
        assert M.contains(x, 1.0, tol=0.0)
        assert not M.contains(x, 1.0 + 1e-6, tol=0.0)
    assert np.all(M.Hx == 0) and M.epsilon == 0.0
    assert delay_mas(Box([-np.inf], [2.0]), 1).poly.nrows == 1


def test_save_load_round_trip(tmp_path):
    M = build_mas(W11, Y11)
    path = tmp_path / "w11.mas"
    save_mas(M, path)
    back = load_mas(path)
    assert np.array_equal(back.poly.H, M.poly.H) and np.array_equal(back.h, M.h)
    assert (back.t_star, back.epsilon, back.n_x, back.kind) == (M.t_star, M.epsilon, M.n_x, M.kind)


def test_input_volume_is_interval_length():
    M = build_mas(W22, Y22)
    vol = input_volume(M, samples=200000, seed=0)
    assert vol == pytest.approx(2 * 0.99 * 3.9, rel=0.01)
