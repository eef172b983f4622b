import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from maxboltz.datum import (COUNTEREXAMPLE_COV, DatumError, Empirical, Gaussian, Mixture, PointMass, SphereUniform,
                            TwoPoint, make_datum, read_points)
from maxboltz.ensemble import (EnsembleError, char_fn, char_fn_many, from_points, moments, radial_char_fn,
                               tail_energy)

DATA = [
    Gaussian(np.array([0.5, -0.2, 0.1]), np.array([[1.5, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])),
    Gaussian(np.zeros(3), COUNTEREXAMPLE_COV),
    SphereUniform(2.0),
    TwoPoint([1, 0, 0], [0, -1, 2], 0.3),
    Mixture((SphereUniform(1.0), Gaussian()), (1.0, 3.0)),
]


@pytest.mark.parametrize("mu", DATA, ids=lambda d: type(d).__name__)
def test_sample_moments_match_datum(mu, rng):
    e = from_points(mu.sample(rng, 200_000))
    s = moments(e)
    assert np.all(np.abs(s.mean - mu.mean) <= 5 * s.mean_se + 1e-12)
    assert abs(s.m2 - mu.m2) <= 5 * s.m2_se + 1e-12


@pytest.mark.parametrize("mu", DATA, ids=lambda d: type(d).__name__)
def test_char_fn_matches_samples(mu, rng):
    e = from_points(mu.sample(rng, 100_000))
    xi = np.array([0.7, -0.3, 0.5])
    val, se = char_fn(e, xi)
    assert abs(val - complex(mu.char_fn(xi))) <= 5 * se + 1e-12


def test_counterexample_covariance_is_degenerate(rng):
    v = Gaussian(np.zeros(3), COUNTEREXAMPLE_COV).sample(rng, 1000)
    assert np.all(v[:, 0] == 0.0)


def test_gaussian_rejects_bad_covariance():
    with pytest.raises(DatumError):
        Gaussian(np.zeros(3), -np.eye(3))
    with pytest.raises(DatumError):
        Gaussian(np.zeros(3), np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1.0]]))


def test_sphere_radial_char_fn():
    s = SphereUniform(1.0)
    assert s.radial_char_fn(0.0) == 1.0
    assert s.radial_char_fn(math.pi) == pytest.approx(0.0, abs=1e-15)
    assert s.m2 == pytest.approx(1.0)


def test_point_mass():
    d = PointMass([1.0, 2.0, 3.0])
    assert np.allclose(d.mean, [1, 2, 3]) and d.m2 == pytest.approx(14.0)


def test_make_datum_forms(tmp_path):
    assert isinstance(make_datum({"type": "sphere", "radius": 2}), SphereUniform)
    g = make_datum({"type": "gaussian", "cov": "counterexample"})
    assert np.array_equal(g.sigma, COUNTEREXAMPLE_COV)
    assert make_datum({"type": "gaussian", "variance": 2.0}).m2 == pytest.approx(6.0)
    e = from_points([[1, 0, 0], [0, 1, 0]], [1, 3])
    e.to_csv(tmp_path / "p.csv")
    d = make_datum({"type": "file", "path": str(tmp_path / "p.csv")})
    assert isinstance(d, Empirical)
    assert np.allclose(d.mean, [0.25, 0.75, 0.0])
    with pytest.raises(DatumError):
        make_datum({"type": "cauchy"})


def test_csv_roundtrip_is_exact(tmp_path, rng):
    e = from_points(rng.standard_normal((100, 3)), rng.random(100))
    e.to_csv(tmp_path / "e.csv")
    back = type(e).from_csv(tmp_path / "e.csv")
    assert np.array_equal(back.points, e.points)
    assert np.array_equal(back.weights, e.weights)
    pts, w = read_points(tmp_path / "e.csv")
    assert pts.shape == (100, 3) and w is not None


def test_npz_roundtrip(tmp_path, rng):
    e = from_points(rng.standard_normal((10, 3)), label="x")
    e.save_npz(tmp_path / "e.npz")
    back = type(e).load_npz(tmp_path / "e.npz")
    assert np.array_equal(back.points, e.points) and back.label == "x"


def test_from_points_validation():
    with pytest.raises(EnsembleError):
        from_points(np.zeros((3, 2)))
    with pytest.raises(EnsembleError):
        from_points([[np.nan, 0, 0]])
    with pytest.raises(EnsembleError):
        from_points([[0, 0, 0]], [-1.0])


def test_weighted_moments_exact():
    e = from_points([[1, 0, 0], [0, 2, 0]], [3, 1])
    s = moments(e)
    assert np.allclose(s.mean, [0.75, 0.5, 0])
    assert s.m2 == pytest.approx(0.75 + 1.0)
    assert s.cov_raw[0, 1] == 0.0


def test_radial_char_fn_of_sphere(rng):
    e = from_points(SphereUniform(1.0).sample(rng, 1000))
    val, se = radial_char_fn(e, [0.5, 2.0])
    assert np.allclose(val, np.sinc(np.array([0.5, 2.0]) / np.pi))
    assert np.all(se < 1e-12)


def test_tail_energy():
    e = from_points([[1, 0, 0], [0, 3, 0]])
    assert tail_energy(e, 2.0) == pytest.approx(4.5)
    assert tail_energy(e, 0.0) == pytest.approx(5.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rotation_commutes_with_moments(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=rng).as_matrix()
    e = from_points(rng.standard_normal((50, 3)), rng.random(50) + 0.1)
    a, b = moments(e.rotate(R)), moments(e)
    assert np.allclose(a.mean, R @ b.mean, atol=1e-12)
    assert np.allclose(a.cov_raw, R @ b.cov_raw @ R.T, atol=1e-12)
    assert a.m2 == pytest.approx(b.m2, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_char_fn_bounded_and_hermitian(seed):
    rng = np.random.default_rng(seed)
    e = from_points(rng.standard_normal((40, 3)))
    xi = rng.standard_normal((5, 3))
    v, _ = char_fn_many(e, xi)
    w, _ = char_fn_many(e, -xi)
    assert np.all(np.abs(v) <= 1 + 1e-12)
    assert np.allclose(w, np.conj(v))


def test_rotated_datum_char_fn():
    g = DATA[0]
    R = Rotation.from_euler("xyz", [0.3, -1.0, 2.0]).as_matrix()
    xi = np.array([0.2, 0.4, -0.6])
    assert complex(g.rotated(R).char_fn(xi)) == pytest.approx(complex(g.char_fn(R.T @ xi)))
