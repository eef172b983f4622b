import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxboltz.collision import wild_ensemble
from maxboltz.datum import Gaussian, PointMass
from maxboltz.ensemble import from_points
from maxboltz.kernel import make_kernel, truncate
from maxboltz.weakform import (a_psi, bump_psi, collision_rhs, cos_psi, curve, curve_derivatives, derivative_norms,
                               direct_rhs, parse_psi, sin_psi, villani_sup_check, weak_residual)

CONST = make_kernel({"family": "constant"})
TRUNC = truncate(make_kernel({"family": "powerlaw", "alpha": 2.5}), 64)
PSIS = [cos_psi([1, 0, 0]), sin_psi([1, 1, 0]), bump_psi()]
vec = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def test_derivative_norms_examples():
    assert derivative_norms(2.0, 0.0) == (4.0, 4.0)
    x = 1 / math.sqrt(2)
    first, second = derivative_norms(1.5, x)
    assert first == pytest.approx(2 * 1.5**2)
    ref = 1.5 * math.sqrt((-3 / math.sqrt(2) + 2 / (2 * math.sqrt(2))) ** 2 / 0.5**3 + 4)
    assert second == pytest.approx(ref)
    assert derivative_norms(0.0, 0.3) == (0.0, 0.0)
    with pytest.raises(ValueError):
        derivative_norms(1.0, 1.0)


def test_villani_bounds():
    m1, r2, p1, p2 = villani_sup_check(1000, 1000)
    assert p1 and p2
    assert m1 >= 0.99  # (1 - s) * bracket at xi -> 0, s -> 0


@settings(max_examples=100, deadline=None)
@given(vec, vec, st.floats(-0.95, 0.95), st.floats(0, 2 * math.pi))
def test_derivatives_antisymmetric_and_normed(v, w, x, th):
    d1, d2, e1, e2 = curve_derivatives(v, w, x, th)
    assert np.array_equal(e1, -d1) and np.array_equal(e2, -d2)
    first, second = derivative_norms(np.linalg.norm(w - v), x)
    assert d1 @ d1 == pytest.approx(first, rel=1e-10, abs=1e-12)
    assert np.linalg.norm(d2) == pytest.approx(second, rel=1e-10, abs=1e-12)


def test_curve_endpoints():
    v, w = np.array([1.0, 0, 0]), np.array([0, 1.0, 2.0])
    vs, ws = curve(v, w, 0.0, 0.4)
    assert np.allclose(vs, v) and np.allclose(ws, w)
    vs, ws = curve(v, w, 1.0, 0.4)
    assert np.allclose(vs, w) and np.allclose(ws, v)


def test_first_order_term_vanishes_after_theta_average(rng):
    for _ in range(20):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        psi = PSIS[rng.integers(3)]
        g, _ = psi.grad_hess(v)
        th = 2 * math.pi * np.arange(64) / 64
        vals = [g @ curve_derivatives(v, w, 0.0, t)[0] for t in th]
        assert abs(np.mean(vals)) <= 1e-12


def test_a_psi_zero_on_diagonal():
    assert a_psi(PSIS[0], [1, 2, 3], [1, 2, 3], 0.5) == 0.0


def test_a_psi_matches_pair_rule(rng):
    # pair_rhs with a single node xk = xi and weight 1 / xi^2 returns A_psi(xi)
    from maxboltz import _jit
    from maxboltz.weakform import s_rule

    v, w = rng.standard_normal(3), rng.standard_normal(3)
    sn, sw = s_rule(32)
    th = 2 * math.pi * np.arange(32) / 32
    for xi in (-0.7, 0.3, 0.9):
        ref = _jit.pair_rhs(0, PSIS[0].par, v[None], w[None], np.array([xi]), np.array([xi**-2]), sn, sw, th[None])
        assert a_psi(PSIS[0], v, w, xi) == pytest.approx(ref[0], rel=1e-12)


def test_a_psi_at_zero_is_second_order_term():
    # at xi = 0 the bracket is constant in s: int (1 - s) ds = 1/2, so A = bracket(0) / 8 averaged over theta
    v, w = np.array([0.2, 0.0, 0.0]), np.array([0.0, 1.0, 0.5])
    val = a_psi(PSIS[0], v, w, 0.0)
    d = w - v
    th = 2 * math.pi * np.arange(32) / 32
    br = []
    for t in th:
        d1, d2, e1, e2 = curve_derivatives(v, w, 0.0, t)
        gv, Hv = PSIS[0].grad_hess(v)
        gw, Hw = PSIS[0].grad_hess(w)
        br.append(gv @ d2 + gw @ e2 + d1 @ Hv @ d1 + e1 @ Hw @ e1)
    assert val == pytest.approx(np.mean(br) / 8, rel=1e-12)
    assert np.linalg.norm(d) > 0


@pytest.mark.parametrize("psi", PSIS, ids=lambda p: p.name)
@pytest.mark.parametrize("kernel", [CONST, TRUNC], ids=["constant", "trunc64"])
def test_taylor_identity_against_direct_average(psi, kernel, rng):
    for _ in range(3):
        v, w = rng.standard_normal(3), rng.standard_normal(3)
        lhs = collision_rhs(psi, v, w, kernel, n_x=128, n_s=64, n_theta=64)[0]
        assert lhs == pytest.approx(direct_rhs(psi, v, w, kernel), abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(vec, vec, st.floats(-1, 1))
def test_a_psi_growth_bound(v, w, xi):
    for psi in PSIS:
        assert abs(a_psi(psi, v, w, xi)) <= psi.K * (1 + np.sum((v - w) ** 2))


def test_bump_bounds_cover_sampled_derivatives(rng):
    psi = bump_psi()
    pts = rng.uniform(-2, 2, (2000, 3))
    for p in pts:
        g, H = psi.grad_hess(p)
        assert np.linalg.norm(g) <= psi.sup1
        assert np.linalg.norm(H, 2) <= psi.sup2
    assert np.all(psi.value(pts) <= psi.sup0)


def test_parse_psi():
    assert parse_psi("cos:1,0,0").name == PSIS[0].name
    assert parse_psi("bump:3").par[3] == 3.0
    with pytest.raises(ValueError):
        parse_psi("exp:1")


def test_constant_test_function_gives_zero_residual(rng):
    mu = Gaussian()
    traj = [(t, wild_ensemble(mu, CONST, t, 2000, rng)) for t in (0.0, 0.5, 1.0)]
    res = weak_residual(traj, cos_psi([0, 0, 0]), CONST, n_pairs=500, rng=rng)
    assert np.all(res.residual == 0.0)


def test_point_mass_trajectory_gives_zero_residual(rng):
    e = from_points(PointMass([1, 2, 3]).sample(rng, 100))
    res = weak_residual([(0.0, e), (1.0, e)], PSIS[0], CONST, n_pairs=100, rng=rng)
    assert np.all(res.residual == 0.0) and np.all(res.uncertainty < 1e-15)


def test_wild_trajectory_satisfies_weak_form(rng):
    mu = Gaussian(np.array([0.3, 0, 0]), np.diag([1.5, 1.0, 0.5]))
    ts = np.linspace(0, 2, 9)
    traj = [(t, wild_ensemble(mu, CONST, t, 20_000, rng)) for t in ts]
    res = weak_residual(traj, PSIS[0], CONST, n_pairs=5000, rng=rng)
    assert all(r["pass"] for r in res.rows())


def test_residual_needs_time_zero(rng):
    e = from_points(rng.standard_normal((10, 3)))
    with pytest.raises(ValueError):
        weak_residual([(0.5, e), (1.0, e)], PSIS[0], CONST)
