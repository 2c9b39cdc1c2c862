import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from loglindley.distribution import Params, as_sample, cdf, log_pdf, moment, pdf, quantile, sample

SIGMAS = [0.5, 1.0, 2.5, 3.5]
PIS = [0.0, 0.2, 0.5, 0.7, 1.0]

params_st = st.builds(Params, st.floats(0.05, 20.0), st.floats(0.0, 1.0))


def _integrate_pdf(p, a=0.0, b=1.0):
    # substitute x = exp(-t) to remove the log singularity at 0
    ta = math.inf if a == 0.0 else -math.log(a)
    tb = -math.log(b)
    val, _ = integrate.quad(
        lambda t: p.sigma * (p.pi + p.sigma * (1.0 - p.pi) * t) * math.exp(-p.sigma * t),
        tb, ta, epsabs=1e-14, epsrel=1e-13, limit=200,
    )
    return val


def _bisect_cdf(p, u):
    lo, hi = 1e-300, 1.0 - 1e-16
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if cdf(p, mid) < u:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


class TestParams:
    @pytest.mark.parametrize("bad", [(0.0, 0.5), (-1.0, 0.5), (1.0, -0.1), (1.0, 1.1), (math.nan, 0.5), (math.inf, 0.2)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            Params(*bad)

    def test_frozen(self):
        p = Params(1.0, 0.2)
        with pytest.raises(AttributeError):
            p.sigma = 2.0

    def test_sample_validation_names_index(self):
        with pytest.raises(ValueError, match="index 2"):
            as_sample([0.1, 0.5, 1.0])
        with pytest.raises(ValueError):
            as_sample([])


class TestDensity:
    def test_uniform_case(self):
        assert pdf(Params(1.0, 1.0), 0.3) == pytest.approx(1.0, abs=1e-15)
        assert log_pdf(Params(1.0, 1.0), 0.3) == pytest.approx(0.0, abs=1e-15)

    def test_log_case(self):
        assert pdf(Params(1.0, 0.0), 0.5) == pytest.approx(-math.log(0.5), rel=1e-14)

    def test_value_integrates(self):
        p = Params(2.5, 0.2)
        assert _integrate_pdf(p) == pytest.approx(1.0, abs=1e-10)
        # direct evaluation of the formula at x = 0.5
        expected = 2.5 * (0.2 + 2.5 * (0.2 - 1.0) * math.log(0.5)) * 0.5 ** 1.5
        assert pdf(p, 0.5) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("sigma", SIGMAS)
    @pytest.mark.parametrize("pi", PIS)
    def test_normalization_grid(self, sigma, pi):
        assert _integrate_pdf(Params(sigma, pi)) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("x", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            pdf(Params(1.0, 0.5), x)
        with pytest.raises(ValueError):
            log_pdf(Params(1.0, 0.5), x)

    @settings(max_examples=200, deadline=None)
    @given(params_st, st.floats(1e-12, 1.0 - 1e-12))
    def test_nonnegative_and_log_consistent(self, p, x):
        f = pdf(p, x)
        assert f >= 0.0
        if f > 1e-300:
            assert log_pdf(p, x) == pytest.approx(math.log(f), rel=1e-10, abs=1e-12)


class TestCdf:
    def test_at_one(self):
        for s in SIGMAS:
            for q in PIS:
                assert cdf(Params(s, q), 1.0) == 1.0

    def test_uniform(self):
        assert cdf(Params(1.0, 1.0), 0.4) == pytest.approx(0.4, rel=1e-15)

    def test_matches_quadrature(self):
        p = Params(2.5, 0.2)
        assert cdf(p, 0.5) == pytest.approx(_integrate_pdf(p, 0.0, 0.5), abs=1e-10)

    def test_limit_at_zero(self):
        assert cdf(Params(2.5, 0.2), 1e-200) < 1e-300
        assert cdf(Params(0.5, 0.2), 1e-12) < 1e-4

    @pytest.mark.parametrize("x", [0.0, 1.0000001, -1.0])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            cdf(Params(1.0, 0.5), x)

    @pytest.mark.parametrize("p", [Params(0.5, 0.2), Params(2.5, 0.7), Params(3.5, 0.0)])
    def test_derivative_matches_pdf(self, p):
        for x in np.linspace(0.05, 0.95, 10):
            h = 1e-6 * x
            fd = (cdf(p, x + h) - cdf(p, x - h)) / (2 * h)
            assert fd == pytest.approx(pdf(p, x), rel=1e-6)


class TestQuantile:
    def test_uniform(self):
        assert quantile(Params(1.0, 1.0), 0.25) == pytest.approx(0.25, rel=1e-15)

    def test_power(self):
        assert quantile(Params(3.0, 1.0), 0.125) == pytest.approx(0.5, rel=1e-14)

    def test_bisection_oracle(self):
        p = Params(2.5, 0.2)
        assert quantile(p, 0.7) == pytest.approx(_bisect_cdf(p, 0.7), abs=1e-9)

    @pytest.mark.parametrize("sigma", SIGMAS)
    @pytest.mark.parametrize("pi", PIS + [0.999999, 1e-9])
    def test_roundtrip_grid(self, sigma, pi):
        p = Params(sigma, pi)
        us = np.concatenate([[1e-6], np.arange(0.01, 1.0, 0.01), [1.0 - 1e-6]])
        xs = quantile(p, us)
        assert np.all((xs > 0) & (xs < 1))
        np.testing.assert_allclose(cdf(p, xs), us, rtol=0, atol=1e-9)

    @settings(max_examples=300, deadline=None)
    @given(params_st, st.floats(1e-10, 1.0 - 1e-10))
    def test_roundtrip_property(self, p, u):
        x = quantile(p, u)
        assert 0.0 < x < 1.0
        assert abs(cdf(p, x) - u) <= 1e-9

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.2])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            quantile(Params(1.0, 0.5), u)

    def test_vectorised_shape(self):
        u = np.array([[0.1, 0.2], [0.3, 0.4]])
        assert quantile(Params(2.0, 0.3), u).shape == (2, 2)


class TestSampleAndMoment:
    def test_uniform_mean(self):
        x = sample(Params(1.0, 1.0), 100_000, np.random.default_rng(1))
        se = math.sqrt(1.0 / 12.0 / x.size)
        assert abs(x.mean() - 0.5) <= 4 * se

    def test_mean_matches_moment(self):
        p = Params(2.5, 0.2)
        x = sample(p, 100_000, np.random.default_rng(2))
        var = moment(p, 2) - moment(p, 1) ** 2
        assert abs(x.mean() - moment(p, 1)) <= 4 * math.sqrt(var / x.size)

    def test_single_draw(self):
        x = sample(Params(2.5, 0.2), 1, np.random.default_rng(3))
        assert x.shape == (1,) and 0.0 < x[0] < 1.0

    def test_deterministic(self):
        a = sample(Params(2.5, 0.2), 50, np.random.default_rng(9))
        b = sample(Params(2.5, 0.2), 50, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_ks(self):
        p = Params(2.5, 0.7)
        x = sample(p, 100_000, np.random.default_rng(4))
        res = stats.kstest(x, lambda v: cdf(p, v))
        # 1% critical value of the KS statistic
        assert res.statistic < 1.628 / math.sqrt(x.size)

    def test_moment_values(self):
        assert moment(Params(1.0, 1.0), 1) == 0.5
        assert moment(Params(1.0, 0.0), 1) == pytest.approx(0.25, rel=1e-15)
        assert moment(Params(2.5, 0.2), 2) == pytest.approx(2.5 * 2.9 / 20.25, rel=1e-15)

    @pytest.mark.parametrize("p", [Params(1.0, 0.0), Params(2.5, 0.2), Params(0.5, 0.7), Params(3.5, 1.0)])
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_moment_quadrature(self, p, k):
        val, _ = integrate.quad(
            lambda t: math.exp(-k * t) * p.sigma * (p.pi + p.sigma * (1 - p.pi) * t) * math.exp(-p.sigma * t),
            0, math.inf, epsabs=1e-14, epsrel=1e-13,
        )
        assert moment(p, k) == pytest.approx(val, abs=1e-10)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            sample(Params(1.0, 0.5), 0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            moment(Params(1.0, 0.5), 0)
