import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxboltz.collision import (CollisionError, h_psi, kac_trajectory, omega, orthobasis, post_collision, sample_Q,
                                sample_wild, wild_ensemble, wild_sizes)
from maxboltz.datum import COUNTEREXAMPLE_COV, Gaussian, PointMass, SphereUniform, TwoPoint
from maxboltz.ensemble import from_points, moments
from maxboltz.kernel import kernel_moments, make_kernel, truncate

CONST = make_kernel({"family": "constant"})
TRUNC16 = truncate(make_kernel({"family": "powerlaw", "alpha": 2.5}), 16)

vec = st.lists(st.floats(-5, 5), min_size=3, max_size=3).map(np.array)


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_collision_conserves_momentum_and_energy(v, w, theta, phi):
    vs, ws = post_collision(v, w, theta, phi)
    assert np.allclose(vs + ws, v + w, atol=1e-12)
    assert vs @ vs + ws @ ws == pytest.approx(v @ v + w @ w, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vec.filter(lambda u: np.linalg.norm(u) > 1e-3))
def test_orthobasis_is_right_handed(u):
    u = u / np.linalg.norm(u)
    f = orthobasis(u)
    M = np.array([f.a, f.b, f.u])
    assert np.allclose(M @ M.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-12)


def test_orthobasis_rejects_non_unit():
    with pytest.raises(ValueError):
        orthobasis([0, 0, 2.0])


def test_omega_polar_angle():
    u = np.array([0.0, 0.6, 0.8])
    om = omega(u, 1.3, 0.4)[0]
    assert om @ u == pytest.approx(math.cos(0.4))
    assert np.linalg.norm(om) == pytest.approx(1.0)


def test_grazing_and_head_on_limits():
    v, w = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    vs, ws = post_collision(v, w, 0.7, math.pi / 2)  # omega orthogonal to w - v: no exchange
    assert np.allclose(vs, v) and np.allclose(ws, w)
    vs, ws = post_collision(v, w, 0.7, 0.0)  # omega along w - v: velocities swap
    assert np.allclose(vs, w) and np.allclose(ws, v)


def test_equal_velocities_unchanged():
    v = np.array([1.0, 2.0, 3.0])
    vs, ws = post_collision(v, v, 0.1, 0.2)
    assert np.array_equal(vs, v) and np.array_equal(ws, v)


def test_wild_sizes_geometric(rng):
    nu = wild_sizes(1.0, rng, 200_000)
    assert nu.min() >= 1
    assert nu.mean() == pytest.approx(math.e, rel=0.02)
    assert np.all(wild_sizes(0.0, rng, 10) == 1)


def test_gain_operator_conserves_mean(rng):
    mu = Gaussian(np.array([1.0, 0, 0]), np.eye(3))
    v = sample_Q(mu, mu, CONST, rng, 100_000)
    s = moments(from_points(v))
    assert np.all(np.abs(s.mean - mu.mean) < 5 * s.mean_se)


def test_wild_at_time_zero_is_initial_datum(rng):
    mu = TwoPoint([1, 0, 0], [-1, 0, 0], 0.5)
    v = sample_wild(mu, CONST, 0.0, rng, 100)
    assert set(map(tuple, v)) <= {(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)}


def test_point_mass_is_stationary(rng):
    v = sample_wild(PointMass([1, 2, 3]), CONST, 2.0, rng, 1000)
    assert np.allclose(v, [1, 2, 3])


def test_wild_is_reproducible():
    mu = Gaussian()
    a = sample_wild(mu, CONST, 1.0, np.random.default_rng(5), 1000)
    b = sample_wild(mu, CONST, 1.0, np.random.default_rng(5), 1000)
    assert np.array_equal(a, b)


def test_wild_cross_moment_relaxes(rng):
    mu = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV)
    s = moments(wild_ensemble(mu, CONST, 1.0, 100_000, rng))
    rate = 1.0 - kernel_moments(CONST).f1
    assert abs(s.cov_raw[1, 2] - 0.5 * math.exp(-rate)) < 4 * s.cov_raw_se[1, 2]


def test_wild_rejects_singular_and_cap(rng):
    with pytest.raises(CollisionError):
        sample_wild(Gaussian(), make_kernel({"family": "powerlaw", "alpha": 2.5}), 1.0, rng, 10)
    with pytest.raises(CollisionError):
        sample_wild(Gaussian(), CONST, 8.0, rng, 100, leaf_cap=10)


def test_kac_conserves_exactly(rng):
    traj = kac_trajectory(Gaussian(np.array([0.3, 0, 0]), np.eye(3)), TRUNC16, [0.0, 1.0, 3.0], 2000, rng)
    p0 = traj[0]
    for p in traj[1:]:
        assert np.allclose(p.sum(0), p0.sum(0), atol=1e-9)
        assert (p**2).sum() == pytest.approx((p0**2).sum(), rel=1e-12)


def test_kac_relaxation_matches_rate(rng):
    mu = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV)
    rate = kernel_moments(TRUNC16).rate
    vals = []
    for k in range(8):
        p = kac_trajectory(mu, TRUNC16, [0.0, 1.0], 20_000, np.random.default_rng(k))
        c0 = (p[0][:, 1] * p[0][:, 2]).mean()
        vals.append((p[1][:, 1] * p[1][:, 2]).mean() - c0 * math.exp(-rate))
    vals = np.array(vals)
    assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(len(vals)) + 1e-3


def test_h_psi_constant_kernel_closed_form():
    # psi(v) = |v|^2 with omega uniform: E[(d.w)(v.w)] = d.v/3, E[(d.w)^2] = |d|^2/3,
    # so the average is |v|^2 + (|w|^2 - |v|^2)/3
    v, w = np.array([1.0, 0, 0]), np.array([0, 2.0, 0])
    val = h_psi(lambda x: np.einsum("...i,...i->...", x, x), v, w, CONST, 32, 32)
    assert val == pytest.approx(1.0 + (4.0 - 1.0) / 3, rel=1e-12)


def test_sphere_energy_spreads_but_is_conserved_on_average(rng):
    s = moments(wild_ensemble(SphereUniform(1.0), CONST, 1.0, 50_000, rng))
    assert abs(s.m2 - 1.0) < 4 * s.m2_se
