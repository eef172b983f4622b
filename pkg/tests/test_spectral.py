import numpy as np
import pytest

from maxboltz.datum import SphereUniform
from maxboltz.kernel import KernelError, make_kernel, truncate
from maxboltz.spectral import RadialCharFn, SpectralError, bobylev_rhs, evolve, init_radial, maxwellian

CONST = make_kernel({"family": "constant"})


def test_maxwellian_is_a_fixed_point():
    phi = init_radial(maxwellian(3.0))
    assert np.abs(bobylev_rhs(phi, CONST)).max() < 1e-8
    trunc = truncate(make_kernel({"family": "powerlaw", "alpha": 2.5}), 16)
    assert np.abs(bobylev_rhs(phi, trunc)).max() < 1e-7


def test_maxwellian_drift_over_time():
    phi0 = init_radial(maxwellian(3.0))
    snaps = evolve(phi0, CONST, 5.0, out_times=[1.0, 3.0, 5.0])
    assert [s.t for s in snaps] == [1.0, 3.0, 5.0]
    assert max(np.abs(s.values - phi0.values).max() for s in snaps) < 1e-6


def test_energy_conserved_for_sphere():
    phi0 = init_radial(SphereUniform(1.0).radial_char_fn)
    assert phi0.second_moment() == pytest.approx(1.0, rel=1e-3)
    snap = evolve(phi0, CONST, 2.0)[-1]
    assert snap.second_moment() == pytest.approx(phi0.second_moment(), rel=1e-4)
    assert np.abs(snap.values).max() <= 1 + 1e-6
    # relaxes toward the Maxwellian with the same energy
    gap0 = np.abs(phi0.values - maxwellian(1.0)(phi0.grid)).max()
    gap = np.abs(snap.values - maxwellian(1.0)(phi0.grid)).max()
    assert gap < gap0


def test_grid_bounds_and_validation():
    phi = init_radial(maxwellian(1.0), r_max=4.0, K=64)
    with pytest.raises(ValueError):
        phi(5.0)
    with pytest.raises(ValueError):
        init_radial(lambda r: 2 + 0 * r)
    with pytest.raises(ValueError):
        evolve(phi, CONST, 1.0, dt=0.0)
    with pytest.raises(KernelError):
        bobylev_rhs(phi, make_kernel({"family": "powerlaw", "alpha": 2.5}))


def test_energy_drift_guard():
    bad = RadialCharFn(np.linspace(0, 8, 65), np.cos(np.linspace(0, 8, 65)))
    with pytest.raises(SpectralError):
        evolve(bad, CONST, 0.5, dt=0.25, energy_tol=1e-12)
