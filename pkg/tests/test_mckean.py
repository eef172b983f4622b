import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxboltz.datum import Gaussian
from maxboltz.kernel import kernel_moments, make_kernel, truncate
from maxboltz.mckean import (attach_velocities, estimate_charfn, m_left, m_right, mckean_batch, o_matrices,
                             pi_weights, recursive_weights, sample_S, sample_tree, second_moment_weight, section_B)

CONST = make_kernel({"family": "constant"})
TRUNC = truncate(make_kernel({"family": "powerlaw", "alpha": 2.5}), 16)


def _is_rotation(M, tol=1e-12):
    return np.allclose(M.T @ M, np.eye(3), atol=tol) and abs(np.linalg.det(M) - 1) < tol


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_section_maps_e3_to_u(u):
    u = np.array(u) / np.linalg.norm(u)
    B = section_B(u)
    assert _is_rotation(B)
    assert np.allclose(B[:, 2], u, atol=1e-12)


def test_section_at_poles():
    assert np.array_equal(section_B([0, 0, 1]), np.eye(3))
    assert np.array_equal(section_B([0, 0, -1]), np.diag([1.0, -1.0, -1.0]))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_branch_matrices_are_rotations(phi, theta):
    assert _is_rotation(m_left(phi, theta))
    assert _is_rotation(m_right(phi, theta))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_compiled_weights_match_recursion(seed, nu):
    tree = sample_tree(1.0, TRUNC, np.random.default_rng(seed), nu=nu)
    assert tree.nu == nu and len(tree.left) == 2 * nu - 1
    pi, zeta, O = recursive_weights(tree)
    w = pi_weights(tree)
    assert np.allclose(w.pi, pi, atol=1e-14)
    assert np.allclose(w.zeta, zeta, atol=1e-14)
    assert np.allclose(o_matrices(tree), np.array(O), atol=1e-13)
    assert math.fsum(w.pi**2) == pytest.approx(1.0, abs=1e-12)


def test_single_leaf_tree():
    tree = sample_tree(0.0, CONST, np.random.default_rng(0))
    assert tree.nu == 1 and tree.shape() == ()
    assert np.array_equal(pi_weights(tree).pi, [1.0])


def test_sample_S_of_single_leaf_is_projection(rng):
    tree = attach_velocities(sample_tree(0.0, CONST, rng), Gaussian(), rng)
    u = np.array([0.6, 0.0, 0.8])
    assert sample_S(tree, u) == pytest.approx(u @ tree.V[0])


def test_charfn_at_time_zero(rng):
    mu = Gaussian(np.array([0.5, 0, 0]), np.diag([1.0, 2.0, 0.5]))
    u = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    val, se = estimate_charfn(0.0, 1.0, u, mu, CONST, 50_000, rng=rng)
    assert abs(val - complex(mu.char_fn(u))) < 4 * se


def test_maxwellian_is_stationary(rng):
    mu = Gaussian()
    rho = np.array([0.5, 1.0, 2.0])
    u = np.array([[0, 0, 1.0], [1.0, 0, 0], [0, -1.0, 0]])
    val, se = estimate_charfn(2.0, rho, u, mu, TRUNC, 50_000, rng=rng)
    assert np.all(np.abs(val - np.exp(-rho**2 / 2)) < 4 * se)


def test_charfn_rho_zero_is_one():
    val, se = estimate_charfn(1.0, 0.0, [0, 0, 1], Gaussian(), CONST, 10)
    assert val == 1.0 and se == 0.0


@pytest.mark.parametrize("kernel", [CONST, TRUNC], ids=["constant", "trunc16"])
def test_zeta_weight_law(kernel):
    f1 = kernel_moments(kernel).f1
    m, se = second_moment_weight(2.0, kernel, 50_000, seed=3)
    assert abs(m - math.exp(-(1 - f1) * 2.0)) < 4 * se
    assert second_moment_weight(0.0, kernel, 10) == (1.0, 0.0)


def test_batch_defects_and_reproducibility():
    a = mckean_batch(3.0, Gaussian(), CONST, [[0, 0, 1]], 2000, np.random.default_rng(9))
    b = mckean_batch(3.0, Gaussian(), CONST, [[0, 0, 1]], 2000, np.random.default_rng(9))
    assert a.pi_defect < 1e-12 and a.rot_defect < 1e-10
    assert np.array_equal(a.S, b.S)
