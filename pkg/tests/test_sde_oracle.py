import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from qqm import rng, sde_oracle as S
from qqm.errors import ConfigurationError, DomainError
from conftest import OU


def _bisect_inverf(z):
    lo, hi = -6.0, 6.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.erf(mid) < z:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_erf_matches_scipy():
    x = np.linspace(-6, 6, 2001)
    np.testing.assert_allclose(S.erf(x), special.erf(x), atol=2e-15)
    np.testing.assert_allclose(S.erfc(x), special.erfc(x), rtol=1e-10, atol=1e-300)


def test_inverf_values():
    assert S.inverf(0.0) == 0.0
    assert S.inverf(0.5) == pytest.approx(_bisect_inverf(0.5), abs=1e-10)
    assert S.inverf(0.5) == pytest.approx(0.476936276, abs=1e-9)
    z = np.linspace(-0.999, 0.999, 37)
    np.testing.assert_allclose(S.inverf(z), special.erfinv(z), rtol=1e-13, atol=1e-15)


@settings(max_examples=50)
@given(st.floats(-0.999999, 0.999999))
def test_inverf_is_odd(z):
    assert S.inverf(-z) == -S.inverf(z)


def test_round_trip():
    z = np.linspace(-0.999, 0.999, 1000)
    assert np.max(np.abs(S.erf(S.inverf(z)) - z)) <= 1e-12


def test_inverf_domain():
    for bad in (1.0, -1.0, 2.0, float("nan")):
        with pytest.raises(DomainError):
            S.inverf(bad)


def test_inverf_derivatives_match_finite_differences():
    h = 1e-5
    for z in (-0.8, 0.0, 0.3, 0.9):
        y, d1, d2 = S.inverf_derivatives(z)
        assert d1 == pytest.approx((S.inverf(z + h) - S.inverf(z - h)) / (2 * h), rel=1e-7)
        assert float(d2) == pytest.approx((S.inverf(z + h) - 2 * y + S.inverf(z - h)) / h ** 2, rel=1e-4, abs=1e-5)


def test_analytic_law_against_scipy():
    t = 0.3
    m = 4 * math.exp(-0.5)
    v = 0.245 * (1 - math.exp(-1.0))
    assert S.analytic_mean(OU, t) == pytest.approx(m, rel=1e-15)
    assert S.analytic_variance(OU, t) == pytest.approx(v, rel=1e-14)
    x = np.linspace(1, 4, 11)
    np.testing.assert_allclose(S.analytic_pdf(OU, x, t), stats.norm.pdf(x, m, math.sqrt(v)), rtol=1e-12)
    np.testing.assert_allclose(S.analytic_cdf(OU, x, t), stats.norm.cdf(x, m, math.sqrt(v)), atol=1e-14)
    z = np.array([-0.9, -0.2, 0.4])
    np.testing.assert_allclose(S.analytic_qf(OU, z, t), stats.norm.ppf((z + 1) / 2, m, math.sqrt(v)), rtol=1e-12)


def test_density_normalizes_and_stationary_limit():
    total, _ = integrate.quad(lambda x: float(S.analytic_pdf(OU, x, 0.25)), -5, 10, epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert S.analytic_variance(OU, 40.0) == pytest.approx(0.245, rel=1e-12)


def test_qf_example_values():
    assert S.analytic_qf(OU, 0.0, 0.0) == pytest.approx(4 * math.exp(-0.2), abs=1e-12)
    assert S.analytic_qf(OU, 0.0, 0.37) == pytest.approx(S.analytic_mean(OU, 0.37), abs=1e-15)
    z = np.linspace(-0.99, 0.99, 101)
    assert np.all(np.diff(S.analytic_qf(OU, z, 0.1)) > 0)


def test_analytic_domain():
    with pytest.raises(DomainError):
        S.analytic_mean(OU, -0.2)
    with pytest.raises(ConfigurationError):
        S.SdeParams(0.0, 0, 1, 0, 0)
    with pytest.raises(ConfigurationError):
        S.SdeParams(1.0, 0, -1, 0, 0)


def test_qf_derivatives_match_finite_differences():
    h = 1e-6
    for z, t in ((-0.5, 0.0), (0.2, 0.25), (0.8, 0.5)):
        q, qz, qzz, qt = S.analytic_qf_derivatives(OU, z, t)
        assert qz == pytest.approx((S.analytic_qf(OU, z + h, t) - S.analytic_qf(OU, z - h, t)) / (2 * h), rel=1e-7)
        assert qt == pytest.approx((S.analytic_qf(OU, z, t + h) - S.analytic_qf(OU, z, t - h)) / (2 * h), rel=1e-6)
        h2 = 1e-4
        fd2 = (S.analytic_qf(OU, z + h2, t) - 2 * q + S.analytic_qf(OU, z - h2, t)) / h2 ** 2
        assert float(qzz) == pytest.approx(fd2, rel=1e-5, abs=1e-6)


def test_em_single_step():
    x = S.em_step(np.array([4.0]), OU, 1e-3, np.array([1.0]))
    assert x[0] == pytest.approx(4.0 + 1.0 * (0 - 4.0) * 1e-3 + 0.7 * math.sqrt(1e-3), abs=1e-15)


def test_em_deterministic_limit():
    p = S.SdeParams(1.0, 0.0, 0.0, 4.0, -0.2)
    x = S.euler_maruyama(p, 1e-3, 0.5, 10, 0)[0.5].values
    assert np.max(np.abs(x - 4 * math.exp(-0.7))) <= 2 * 1.0 * 4.0 * 1e-3


def test_em_is_deterministic_and_chunk_stable():
    a = S.euler_maruyama(OU, 1e-2, 0.5, 2500, 3, slices=(0.0, 0.5), chunk=1000)
    b = S.euler_maruyama(OU, 1e-2, 0.5, 2500, 3, slices=(0.0, 0.5), chunk=1000)
    for t in (0.0, 0.5):
        np.testing.assert_array_equal(a[t].values, b[t].values)


def test_em_weak_convergence():
    bias = []
    for dt in (4e-3, 2e-3, 1e-3):
        x = S.euler_maruyama(OU, dt, 0.5, 1000, 0, antithetic=True)[0.5].values
        bias.append(abs(np.mean(x) - S.analytic_mean(OU, 0.5)))
    slope = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(bias), 1)[0]
    assert abs(slope - 1.0) <= 0.3


def test_histogram_rules():
    h = S.histogram(np.full(10, 0.5), (0.0, 1.0), 4)
    np.testing.assert_array_equal(h.counts, [0, 0, 1.0, 0])
    x = rng.box_muller(rng.stream(1), 1000)
    assert S.histogram(x, (-1, 1), 10).counts.sum() <= 1.0
    np.testing.assert_array_equal(S.histogram(x, (-5, 5), 10).counts - S.histogram(x, (-5, 5), 10).counts, 0)
    with pytest.raises(ConfigurationError):
        S.histogram(x, (1, 1), 10)


def _analytic_samples(t, n, seed):
    z = rng.uniform_latent(rng.stream(seed, rng.SAMPLING), n)
    return S.analytic_qf(OU, z, t)


def test_analytic_samples_match_bin_probabilities():
    x = _analytic_samples(0.25, 100000, 0)
    h = S.histogram(x, S.default_histogram_range(OU), 40)
    assert np.max(np.abs(h.counts - S.bin_probabilities(OU, h.edges, 0.25))) <= 0.01


def test_ks_statistic():
    x = _analytic_samples(0.0, 100000, 1)
    assert S.ks_statistic(x, x) == 0.0
    assert S.ks_statistic(np.zeros(5), np.ones(5)) == 1.0
    ks = S.ks_statistic(x, lambda v: S.analytic_cdf(OU, v, 0.0))
    assert ks == pytest.approx(stats.kstest(x, lambda v: S.analytic_cdf(OU, v, 0.0)).statistic, abs=1e-12)
    # DKW: P(ks > eps) <= 2 exp(-2 n eps^2) = 4e-9 at eps = 0.01
    assert ks <= 0.01
    y = _analytic_samples(0.0, 3000, 2)
    assert S.ks_statistic(x, y) == pytest.approx(stats.ks_2samp(x, y).statistic, abs=1e-12)


def test_quantile_cdf_duality():
    x = _analytic_samples(0.3, 100000, 5)
    for z in (-0.5, 0.0, 0.5):
        assert np.mean(x < S.analytic_qf(OU, z, 0.3)) == pytest.approx((z + 1) / 2, abs=0.01)


def test_box_muller_is_standard_normal():
    x = rng.box_muller(rng.stream(0, 9), 200001)
    assert x.size == 200001
    assert stats.kstest(x, "norm").statistic < 0.005
