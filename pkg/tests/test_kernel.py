import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from maxboltz.kernel import (AngleSampler, KernelError, KernelSpec, angle_sampler, first_level, kernel_moments,
                             make_kernel, parse_kernel, quadrature, sample_angle, truncate)

POWER = {"family": "powerlaw", "alpha": 2.5}


def test_constant_kernel_moments():
    m = kernel_moments(make_kernel({"family": "constant"}))
    assert m.Bbar == pytest.approx(1 / 3, abs=1e-14)
    assert m.f1 == pytest.approx(0.6, abs=1e-14)
    assert m.rate == pytest.approx(0.4, abs=1e-14)


def test_powerlaw_closed_form_moments():
    k = make_kernel(POWER)
    assert k.is_singular and not k.is_cutoff
    # int_0^1 x^2 x^-2.5 dx = 2, untruncated relaxation rate 3 * (2 - 2/5) = 4.8
    assert k.moment(2.0) == pytest.approx(2.0)
    assert kernel_moments(k).rate == pytest.approx(4.8)


@pytest.mark.parametrize("n,B", [(4, 3.1623278499901164), (16, 8.130052738485961), (64, 19.542887553471974),
                                 (256, 45.76269670912662)])
def test_truncation_mass_frozen(n, B):
    t = truncate(make_kernel(POWER), n)
    assert t.B == pytest.approx(B, rel=1e-12)
    # B_n = (5/3) n^(3/5) - 2/3 for b = x^-5/2
    assert t.B == pytest.approx(5 / 3 * n**0.6 - 2 / 3, rel=1e-12)
    q, _ = integrate.quad(lambda x: t.b(x), 0, 1, points=t.breakpoints, limit=200)
    assert q == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("n,rate", [(4, 0.367042456944378), (16, 0.24178860528197355), (64, 0.13472925045264939),
                                    (256, 0.06889801275424157)])
def test_truncated_rates_frozen(n, rate):
    assert kernel_moments(truncate(make_kernel(POWER), n)).rate == pytest.approx(rate, rel=1e-9)


def test_very_weak_cutoff_rejected():
    with pytest.raises(KernelError, match="very weak cutoff"):
        make_kernel({"family": "powerlaw", "alpha": 3.0})


def test_singular_kernel_cannot_be_normalized():
    with pytest.raises(KernelError):
        make_kernel(POWER, normalize=True)


def test_table_kernel_normalization():
    k = make_kernel({"family": "table", "nodes": [[0, 1], [1, 3]]}, normalize=True)
    assert k.mass == pytest.approx(1.0)
    with pytest.raises(KernelError):
        make_kernel({"family": "table", "nodes": [[0.5, 1], [0.2, 3]]})


def test_parse_kernel_short_forms():
    assert parse_kernel("constant").family == "constant"
    assert parse_kernel("powerlaw:2.5").alpha == 2.5
    with pytest.raises(KernelError):
        parse_kernel("gaussian")


def test_first_level_and_bad_levels():
    assert first_level(make_kernel(POWER)) == 1
    with pytest.raises(KernelError):
        truncate(make_kernel(POWER), 0)


@pytest.mark.parametrize("kernel", [make_kernel({"family": "constant"}), truncate(make_kernel(POWER), 64),
                                    make_kernel({"family": "table", "nodes": [[0, 1], [0.5, 4], [1, 0]]},
                                                normalize=True)])
def test_quadrature_matches_adaptive_integration(kernel):
    x, w = quadrature(kernel, 64)
    for f in (lambda y: np.ones_like(y), lambda y: y**2, lambda y: np.cos(3 * y)):
        ref, _ = integrate.quad(lambda y: f(np.array(y)) * kernel.b(y), 0, 1, points=kernel.breakpoints or None,
                                limit=200)
        assert w @ f(x) == pytest.approx(ref, abs=1e-10)


def test_untruncated_quadrature_uses_algebraic_weight():
    x, w = quadrature(make_kernel({"family": "powerlaw", "alpha": 0.5}), 32)
    assert w @ x**2 == pytest.approx(1 / 2.5, rel=1e-12)


@pytest.mark.parametrize("kernel", [make_kernel({"family": "constant"}), truncate(make_kernel(POWER), 4),
                                    truncate(make_kernel(POWER), 256)])
def test_sampler_matches_exact_cdf(kernel):
    s = angle_sampler(kernel)
    x = s.abs_cos(np.random.default_rng(1), 100_000)
    ks = stats.kstest(x, s.cdf_abs)
    assert ks.statistic < 0.005


def test_sample_angle_range_and_symmetry(rng):
    phi = sample_angle(make_kernel({"family": "constant"}), rng, 50_000)
    assert phi.min() >= 0 and phi.max() <= math.pi
    # constant b: cos(phi) uniform on [-1, 1]
    assert abs(np.cos(phi).mean()) < 4 * (1 / math.sqrt(3)) / math.sqrt(50_000)


def test_sampler_rejects_singular():
    with pytest.raises(KernelError):
        AngleSampler(make_kernel(POWER))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.9), st.integers(1, 500))
def test_truncated_kernel_is_normalized_and_monotone_in_level(alpha, n):
    base = make_kernel({"family": "powerlaw", "alpha": alpha})
    t1, t2 = truncate(base, n), truncate(base, n + 1)
    assert t2.B >= t1.B
    assert t1.moment(0.0) == pytest.approx(1.0, rel=1e-12)
    # truncation only removes mass near x = 0: Bbar_n increases to Bbar
    assert base.moment(2.0, cap=n) <= base.moment(2.0, cap=n + 1) + 1e-15
    assert base.moment(2.0, cap=n) <= base.moment(2.0) + 1e-12


def test_kernelspec_json_roundtrip():
    k = make_kernel(POWER)
    assert make_kernel(k.to_json(), normalize=False) == k
