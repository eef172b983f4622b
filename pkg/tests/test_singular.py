import math

import numpy as np
import pytest

from maxboltz.datum import COUNTEREXAMPLE_COV, Gaussian, SphereUniform
from maxboltz.kernel import kernel_moments, make_kernel, truncate
from maxboltz.singular import (LadderError, arkeryd_run, icosahedron, ladder_trend, lipschitz_certificates,
                               morimoto_bound, morimoto_divergence, predicted_covariance, probe_directions,
                               probe_grid, relaxation_factor)

POWER = make_kernel({"family": "powerlaw", "alpha": 2.5})
CONST = make_kernel({"family": "constant"})


def test_probe_grid_shape():
    ico = icosahedron()
    assert ico.shape == (12, 3) and np.allclose(np.linalg.norm(ico, axis=1), 1.0)
    d = probe_directions()
    assert d.shape == (24, 3) and len(np.unique(np.round(d, 12), axis=0)) == 24
    g = probe_grid()
    assert g.shape == (96, 3)
    assert sorted(set(np.round(np.linalg.norm(g, axis=1), 12))) == [0.25, 0.5, 1.0, 2.0]


def test_relaxation_factor_constant_kernel():
    assert relaxation_factor(CONST, None, 2.0) == pytest.approx(math.exp(-0.8))


def test_relaxation_factor_truncated_matches_rate():
    for n in (4, 64):
        t = truncate(POWER, n)
        # physical time t corresponds to internal time B_n t of the normalized kernel
        assert relaxation_factor(POWER, n, 1.0) == pytest.approx(math.exp(-kernel_moments(t).rate * t.B))


def test_predicted_covariance_keeps_trace():
    c = predicted_covariance(COUNTEREXAMPLE_COV, 0.3)
    assert np.trace(c) == pytest.approx(np.trace(COUNTEREXAMPLE_COV))
    assert c[1, 2] == pytest.approx(0.15)
    assert np.allclose(predicted_covariance(COUNTEREXAMPLE_COV, 0.0), np.eye(3) * 2 / 3)


@pytest.mark.parametrize("engine", ["wild", "kac"])
def test_ladder_report_structure(engine):
    mu0 = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV)
    rep = arkeryd_run(POWER, mu0, [4, 16], [0.25], M=4000, seed=1, engine=engine, replicas=4)
    assert rep.times == [0.0, 0.25] and rep.engine == engine
    assert rep.values.shape == (2, 2, 96)
    if engine == "kac":
        # shared initial particles: the two levels agree exactly at t = 0
        assert np.array_equal(rep.values[0, 0], rep.values[1, 0])
    certs = lipschitz_certificates(rep, mu0.m2, kernel=POWER)
    assert sum(c["fail"] for c in certs) == 0
    assert ladder_trend(rep) == []  # needs three levels
    assert set(rep.to_json()) >= {"levels", "B", "re", "im", "discrepancy"}


def test_ladder_spectral_engine():
    rep = arkeryd_run(POWER, SphereUniform(1.0), [4, 16, 64], [0.1], engine="spectral")
    assert np.all(rep.se == 0)
    assert rep.discrepancy[1, 1] < rep.discrepancy[0, 1]


def test_ladder_validation():
    with pytest.raises(LadderError):
        arkeryd_run(POWER, Gaussian(), [16, 4], [1.0])
    with pytest.raises(LadderError):
        arkeryd_run(POWER, Gaussian(np.ones(3), np.eye(3)), [4, 16], [1.0], engine="spectral")


def test_morimoto_bound_random_trials(rng):
    for _ in range(50):
        A = rng.standard_normal((3, 3))
        chi = Gaussian(rng.normal(size=3), A @ A.T)
        xi = rng.standard_normal(3)
        for k in (CONST, truncate(POWER, 16)):
            lhs, rhs = morimoto_bound(chi, k, xi, n_x=24, n_theta=24)
            assert lhs <= rhs


@pytest.mark.parametrize("eps,value", [(1e-2, 3.3971230864814776), (1e-3, 11.746344987071486),
                                       (1e-4, 38.14945622584034)])
def test_divergence_values_frozen(eps, value):
    assert morimoto_divergence(2.5, eps) == pytest.approx(value, rel=1e-9)


def test_divergence_ratio_and_eigen_direction():
    I = [morimoto_divergence(2.5, e) for e in (1e-2, 1e-3, 1e-4)]
    assert I[0] <= I[1] <= I[2] and I[2] / I[0] >= 3
    # along an eigenvector of the covariance the integral stays bounded
    J = [morimoto_divergence(2.5, e, xi=[0, 1, 1]) for e in (1e-2, 1e-4)]
    assert J[1] / J[0] < 1.5
