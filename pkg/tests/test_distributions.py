import math

import numpy as np
import pytest
from scipy import integrate, stats

from sfcf.distributions import (
    ComposedSpec,
    Exponential,
    Gamma,
    HalfNormal,
    Orientation,
    composed_cdf,
    composed_cdf_quadrature,
    composed_density,
    composed_density_quadrature,
    composed_logpdf,
    normexp_density,
    normexp_logpdf,
    null_cf,
    sample_composed,
    stream,
)

NE = ComposedSpec.normal_exponential(1.0, 1.0)
NG2 = ComposedSpec.normal_gamma(1.0, 2.0, 1.0)


def _brute_density(eps, sigma_v, ineff, sign=-1):
    """Convolution on the raw u scale, independent of the library's substitution."""
    f = lambda u: stats.norm.pdf(eps - sign * u, scale=sigma_v) * ineff.pdf(u)
    return integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-11, limit=500)[0]


class TestSampling:
    def test_exponential_mean(self):
        x = sample_composed(NE, 100_000, 7)
        se = math.sqrt(2.0 / x.size)
        assert abs(x.mean() + 1.0) < 3 * se

    def test_halfnormal_mean(self):
        spec = ComposedSpec.normal_halfnormal(1.0, 10.0)
        x = sample_composed(spec, 100_000, 1)
        target = -10.0 * math.sqrt(2 / math.pi)
        se = math.sqrt(spec.var() / x.size)
        assert abs(x.mean() - target) < 3 * se

    def test_cost_orientation_flips_sign(self):
        cost = ComposedSpec.normal_exponential(1.0, 2.0, Orientation.COST)
        x = sample_composed(cost, 50_000, 3)
        assert abs(x.mean() - 2.0) < 4 * math.sqrt(cost.var() / x.size)

    def test_gamma_moments(self):
        x = sample_composed(NG2, 200_000, 11)
        assert abs(x.mean() + 2.0) < 4 * math.sqrt(NG2.var() / x.size)
        assert NG2.var() == pytest.approx(3.0)

    def test_deterministic(self):
        np.testing.assert_array_equal(sample_composed(NG2, 5, 42), sample_composed(NG2, 5, 42))

    def test_streams_are_keyed(self):
        a = stream(1, 2, 3).standard_normal(4)
        b = stream(1, 2, 4).standard_normal(4)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, stream(1, 2, 3).standard_normal(4))

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
    def test_rejects_bad_scale(self, bad):
        with pytest.raises(ValueError):
            Exponential(bad)


class TestNormexpDensity:
    def test_origin(self):
        expected = stats.norm.cdf(-1) * math.exp(0.5)
        assert normexp_density(0.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.26158, abs=1e-5)

    def test_normalised(self):
        total = integrate.quad(lambda e: normexp_density(e, 1.0, 1.0), -np.inf, np.inf, epsabs=0, epsrel=1e-12)[0]
        assert abs(total - 1) < 1e-8

    @pytest.mark.parametrize("eps", [30.0, -40.0, 8.0, -1.5])
    def test_tails_match_convolution(self, eps):
        ref = _brute_density(eps, 1.0, Exponential(1.0))
        got = normexp_density(eps, 1.0, 1.0)
        assert np.isfinite(got) and got > 0
        assert got == pytest.approx(ref, rel=1e-9)

    def test_far_tail_log_domain(self):
        # the density underflows here but its log must stay finite
        assert np.isfinite(normexp_logpdf(60.0, 1.0, 1.0))
        assert np.isfinite(normexp_logpdf(-800.0, 1.0, 1.0))


class TestComposedDensity:
    @pytest.mark.parametrize("eps", [-6.0, -1.0, 0.0, 2.5])
    def test_quadrature_matches_closed_exp(self, eps):
        assert composed_density_quadrature(eps, NE) == pytest.approx(float(normexp_density(eps, 1.0, 1.0)), rel=1e-8)

    def test_small_noise_limit(self):
        spec = ComposedSpec.normal_exponential(0.01, 1.0)
        assert abs(composed_density_quadrature(-1.0, spec) - math.exp(-1)) < 1e-3

    def test_gamma_normalised(self):
        total = integrate.quad(lambda e: composed_density_quadrature(e, NG2), -np.inf, np.inf, epsabs=0, epsrel=1e-10)[0]
        assert abs(total - 1) < 1e-7

    @pytest.mark.parametrize("eps", [-40.0, -12.0, -2.0, 0.0, 3.0, 9.0])
    def test_gamma2_closed_form(self, eps):
        ref = _brute_density(eps, 1.0, Gamma(2.0, 1.0))
        assert float(composed_density(eps, NG2)) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("kappa", [0.5, 3.0])
    def test_other_shapes_by_quadrature(self, kappa):
        spec = ComposedSpec.normal_gamma(1.0, kappa, 1.5)
        for eps in (-4.0, -0.5, 1.0):
            ref = _brute_density(eps, 1.0, Gamma(kappa, 1.5))
            assert float(composed_density(eps, spec)) == pytest.approx(ref, rel=1e-7)

    def test_halfnormal(self):
        spec = ComposedSpec.normal_halfnormal(1.0, 2.0)
        for eps in (-5.0, 0.0, 2.0):
            ref = _brute_density(eps, 1.0, HalfNormal(2.0))
            assert float(composed_density(eps, spec)) == pytest.approx(ref, rel=1e-8)

    def test_cost_mirror(self):
        cost = ComposedSpec.normal_gamma(1.0, 2.0, 1.0, Orientation.COST)
        e = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(composed_logpdf(e, cost), composed_logpdf(-e, NG2), rtol=1e-13)

    def test_gamma2_monte_carlo(self):
        # kernel estimate at 0 from 10^7 draws
        x = sample_composed(NG2, 10_000_000, 5)
        h = 0.02
        kde = np.mean(np.abs(x) < h) / (2 * h)
        assert abs(kde - float(composed_density(0.0, NG2))) < 0.002


class TestCdf:
    @pytest.mark.parametrize("spec", [NE, NG2, ComposedSpec.normal_gamma(0.7, 2.0, 1.3, Orientation.COST)])
    def test_tails(self, spec):
        spread = spec.sigma_v + spec.ineff.scale
        assert composed_cdf(-50 * spread, spec) < 1e-9
        assert composed_cdf(50 * spread, spec) > 1 - 1e-9

    @pytest.mark.parametrize("spec", [NE, NG2, ComposedSpec.normal_exponential(0.5, 2.0, Orientation.COST)])
    def test_closed_matches_quadrature(self, spec):
        for e in (-6.0, -1.0, 0.0, 0.8, 4.0):
            assert float(composed_cdf(e, spec, "closed")) == pytest.approx(composed_cdf_quadrature(e, spec), abs=1e-10)

    def test_median_monte_carlo(self):
        from scipy.optimize import brentq

        med = brentq(lambda e: float(composed_cdf(e, NE)) - 0.5, -10, 10)
        x = sample_composed(NE, 1_000_000, 17)
        assert abs(np.mean(x <= med) - 0.5) < 0.003

    def test_monotone(self):
        e = np.linspace(-10, 6, 300)
        assert np.all(np.diff(composed_cdf(e, NG2)) >= 0)


class TestCharacteristicFunction:
    @pytest.mark.parametrize("spec", [NE, NG2, ComposedSpec.normal_halfnormal(1.0, 3.0)])
    def test_origin_and_modulus(self, spec):
        assert complex(null_cf(0.0, spec)) == 1
        t = np.linspace(-20, 20, 401)
        assert np.all(np.abs(null_cf(t, spec)) <= 1 + 1e-12)

    def test_matches_simulation(self):
        x = sample_composed(NE, 1_000_000, 23)
        phi = complex(null_cf(1.0, NE))
        assert abs(np.cos(x).mean() - phi.real) < 0.005
        assert abs(np.sin(x).mean() - phi.imag) < 0.005

    def test_halfnormal_cf_against_skew_normal(self):
        # v - u with half-normal u is skew-normal with shape -sigma_u/sigma_v
        sv, su, t = 1.0, 1.5, 0.7
        law = stats.skewnorm(-su / sv, scale=math.hypot(sv, su))
        re = integrate.quad(lambda e: math.cos(t * e) * law.pdf(e), -np.inf, np.inf, epsabs=1e-12)[0]
        im = integrate.quad(lambda e: math.sin(t * e) * law.pdf(e), -np.inf, np.inf, epsabs=1e-12)[0]
        spec = ComposedSpec.normal_halfnormal(sv, su)
        assert complex(null_cf(t, spec)) == pytest.approx(complex(re, im), abs=1e-8)
        assert float(composed_density(-1.0, spec)) == pytest.approx(law.pdf(-1.0), rel=1e-9)
