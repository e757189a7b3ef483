import math

import numpy as np
import pytest
from scipy import stats

from sfcf.distributions import ComposedSpec, Orientation, composed_density_quadrature, normexp_logpdf, sample_composed
from sfcf.estimation import (
    FitError,
    NullModel,
    Sample,
    fit_mle,
    loglik,
    normexp_loglik,
    normgamma_loglik,
    ols_init,
)


def _simulate(n, seed, sigma_v=1.0, theta=1.0, beta=0.5, gamma=False, orientation=Orientation.PRODUCTION):
    spec = (
        ComposedSpec.normal_gamma(sigma_v, 2.0, theta, orientation)
        if gamma
        else ComposedSpec.normal_exponential(sigma_v, theta, orientation)
    )
    return Sample(beta + sample_composed(spec, n, seed))


def _grid_loglik(y, b, s, th):
    """Vectorised normal/exponential log-likelihood over a parameter grid."""
    e = y[None, None, None, :] - b[:, None, None, None]
    s = s[None, :, None, None]
    th = th[None, None, :, None]
    terms = -np.log(th) + s**2 / (2 * th**2) + e / th + stats.norm.logcdf(-e / s - s / th)
    return terms.sum(axis=-1)


class TestSample:
    def test_design(self):
        s = Sample(np.arange(5.0), np.ones((5, 2)) * [[1, 2]])
        assert s.design.shape == (5, 3) and s.n_params == 3

    def test_no_intercept(self):
        s = Sample(np.arange(4.0), np.arange(4.0), intercept=False)
        assert s.n_params == 1

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Sample([1.0, np.nan, 2.0, 3.0])

    def test_rejects_too_small(self):
        with pytest.raises(ValueError):
            Sample([1.0, 2.0])


class TestOlsInit:
    def test_moment_formula(self):
        beta0, sigma0, theta0 = ols_init(Sample([1, 1, 1, 1, -2, -2.0]))
        assert theta0 == pytest.approx(1.0, rel=1e-12)
        assert sigma0**2 == pytest.approx(1.0, rel=1e-12)
        assert beta0[0] == pytest.approx(1.0, rel=1e-12)

    def test_wrong_skew_clamps(self):
        y = np.array([-1, -1, -1, -1, 2, 2.0])
        beta0, sigma0, theta0 = ols_init(Sample(y))
        assert theta0 == pytest.approx(0.05 * math.sqrt(2.0))
        assert sigma0 > 0

    def test_large_sample(self):
        beta0, sigma0, theta0 = ols_init(_simulate(5000, 1))
        assert abs(beta0[0] - 0.5) < 0.2 and abs(sigma0 - 1) < 0.2 and abs(theta0 - 1) < 0.2


class TestLikelihood:
    def test_single_point(self):
        ll = normexp_loglik([0.0], 1.0, 1.0, Sample([0.0, 0.0, 0.0], intercept=False))
        assert ll / 3 == pytest.approx(stats.norm.logcdf(-1) + 0.5, abs=1e-12)
        assert ll / 3 == pytest.approx(-1.34102, abs=1e-5)

    def test_sum_of_log_densities(self):
        rng = np.random.default_rng(0)
        s = Sample(rng.normal(size=6) - 1)
        ll = normexp_loglik([0.2], 0.8, 1.3, s)
        assert ll == pytest.approx(float(np.sum(normexp_logpdf(s.y - 0.2, 0.8, 1.3))), rel=1e-12)

    def test_stable_tail(self):
        s = Sample([-40.0] * 3, intercept=False)
        ll = normexp_loglik([], 1.0, 1.0, s) / 3
        ref = math.log(composed_density_quadrature(-40.0, ComposedSpec.normal_exponential(1.0, 1.0)))
        assert np.isfinite(ll) and ll == pytest.approx(ref, abs=1e-6)

    def test_gamma_one_is_exponential(self):
        s = _simulate(50, 2)
        a = normgamma_loglik([0.4], 0.9, 1.1, 1.0, s)
        b = normexp_loglik([0.4], 0.9, 1.1, s)
        assert a == pytest.approx(b, abs=1e-6)

    def test_gamma2_matches_quadrature(self):
        s = Sample([-3.0, 0.0, 1.5], intercept=False)
        spec = ComposedSpec.normal_gamma(1.0, 2.0, 1.0)
        ref = sum(math.log(composed_density_quadrature(e, spec)) for e in s.y)
        assert normgamma_loglik([], 1.0, 1.0, 2.0, s) == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("model", [NullModel.exponential(), NullModel.gamma2(), NullModel.exponential(Orientation.COST)])
    def test_translation(self, model):
        s = _simulate(30, 3)
        c = 2.7
        a = loglik([0.1], 1.0, 1.0, s, model)
        b = loglik([0.1 + c], 1.0, 1.0, s.with_y(s.y + c), model)
        assert a == pytest.approx(b, rel=1e-12)


class TestFit:
    def test_consistency(self):
        s = _simulate(2000, 11)
        fit = fit_mle(s)
        assert fit.converged
        assert abs(fit.beta[0] - 0.5) < 0.15 and abs(fit.sigma_v - 1) < 0.15 and abs(fit.theta - 1) < 0.15
        assert fit.loglik >= normexp_loglik([0.5], 1.0, 1.0, s)

    def test_grid_oracle(self):
        s = _simulate(200, 12)
        fit = fit_mle(s)
        b = np.arange(-0.5, 1.5 + 1e-9, 0.05)
        pos = np.arange(0.05, 2.0 + 1e-9, 0.05)
        grid = _grid_loglik(s.y, b, pos, pos)
        assert fit.loglik >= grid.max() - 1e-9

    def test_gamma_fit(self):
        s = _simulate(2000, 13, gamma=True)
        fit = fit_mle(s, NullModel.gamma2())
        assert fit.converged
        assert abs(fit.theta - 1) < 0.2 and abs(fit.sigma_v - 1) < 0.2
        assert fit.loglik >= normgamma_loglik([0.5], 1.0, 1.0, 2.0, s)

    def test_cost_fit(self):
        s = _simulate(1500, 14, theta=1.5, orientation=Orientation.COST)
        fit = fit_mle(s, NullModel.exponential(Orientation.COST))
        assert fit.converged and abs(fit.theta - 1.5) < 0.25

    def test_regressors(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(1000, 2))
        eps = sample_composed(ComposedSpec.normal_exponential(0.5, 1.0), 1000, rng)
        s = Sample(1.0 + x @ [2.0, -1.0] + eps, x)
        fit = fit_mle(s)
        np.testing.assert_allclose(fit.beta, [1.0, 2.0, -1.0], atol=0.15)

    def test_scale_equivariance(self):
        s = _simulate(300, 16)
        c = 3.0
        a, b = fit_mle(s), fit_mle(s.with_y(c * s.y))
        assert b.theta == pytest.approx(c * a.theta, rel=1e-4)
        assert b.sigma_v == pytest.approx(c * a.sigma_v, rel=1e-4)
        assert b.loglik == pytest.approx(a.loglik - s.n * math.log(c), rel=1e-7)

    def test_std_residuals(self):
        fit = fit_mle(_simulate(200, 17))
        np.testing.assert_allclose(fit.std_residuals, fit.residuals / fit.theta)

    def test_wrong_skew_does_not_raise(self):
        fit = fit_mle(Sample(-(_simulate(200, 18).y)))
        assert np.isfinite(fit.loglik) and fit.theta > 0

    def test_warm_start(self):
        s = _simulate(400, 19)
        cold = fit_mle(s)
        warm = fit_mle(s, start=(cold.beta, cold.sigma_v, cold.theta))
        assert warm.loglik == pytest.approx(cold.loglik, rel=1e-9)

    def test_rank_deficient(self):
        x = np.ones((20, 1))
        with pytest.raises(FitError):
            fit_mle(Sample(np.random.default_rng(0).normal(size=20), x))
