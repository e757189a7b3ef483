import math

import numpy as np
import pytest

from sfcf import resampling
from sfcf.distributions import ComposedSpec, sample_composed
from sfcf.estimation import FitError, NullModel, Sample, SfmFit, fit_mle
from sfcf.resampling import (
    DataGenerator,
    MonteCarloAbort,
    Statistic,
    bootstrap_p_value,
    bootstrap_refit,
    critical_point,
    full_bootstrap_test,
    single_bootstrap,
    warp_speed_mc,
    warp_speed_mc_multi,
)

NULL_EXP = NullModel.exponential()
NE1 = ComposedSpec.normal_exponential(1.0, 1.0)


def _fixed_fit(sigma_v, theta, n):
    r = np.zeros(n)
    return SfmFit(np.empty(0), sigma_v, theta, 0.0, r, r, True, NULL_EXP)


class TestStatistic:
    def test_names(self):
        assert Statistic.cf(0.5).name == "T(lambda=0.5)"
        assert Statistic("ks").name == "KS" and Statistic("cvm").test_name == "CvM"

    @pytest.mark.parametrize("bad", [("cf", None), ("cf", 0.0), ("ad", None)])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            Statistic(*bad)


class TestSingleBootstrap:
    def test_generator_mean(self):
        n = 20_000
        fit = _fixed_fit(0.01, 1.0, n)
        sample = Sample(np.zeros(n), intercept=False)
        refit = bootstrap_refit(fit, sample, 5)
        se = math.sqrt((0.01**2 + 1.0) / n)
        assert abs(refit.residuals.mean() + 1.0) < 4 * se

    def test_deterministic(self):
        sample = Sample(0.5 + sample_composed(NE1, 150, 1))
        fit = fit_mle(sample)
        stat = Statistic.cf(1.0)
        assert single_bootstrap(fit, sample, stat, 9) == single_bootstrap(fit, sample, stat, 9)

    def test_ks_range(self):
        sample = Sample(0.5 + sample_composed(NE1, 150, 2))
        fit = fit_mle(sample)
        value = single_bootstrap(fit, sample, Statistic("ks"), 3)
        assert 0.0 <= value <= 1.0


class TestCriticalPoint:
    def test_integer_alpha_m(self):
        assert critical_point(np.arange(1, 11), 0.1) == 9
        assert critical_point(np.arange(1, 11), 0.5) == 5

    def test_shuffled(self):
        x = np.random.default_rng(0).permutation(np.arange(1, 1001))
        assert critical_point(x, 0.05) == 950

    def test_tiny_alpha_clamps(self):
        assert critical_point([3.0, 1.0, 2.0], 0.01) == 3.0

    def test_p_value(self):
        assert bootstrap_p_value(10.0, np.arange(5)) == pytest.approx(1 / 6)
        boot = np.r_[np.full(10, 2.0), np.zeros(189)]
        p = bootstrap_p_value(1.0, boot)
        assert p == pytest.approx(11 / 200) and not p <= 0.05


class TestWarpSpeed:
    def test_constant_statistic_never_rejects(self):
        zero = lambda fit: 0.0
        zero.name = "zero"
        run = warp_speed_mc(DataGenerator(NE1), NULL_EXP, zero, 100, 50, master_seed=1)
        assert run.rejection_rate == 0.0

    def test_shared_fits(self, monkeypatch):
        calls = []
        real = resampling.fit_mle

        def counting(*a, **k):
            calls.append(1)
            return real(*a, **k)

        monkeypatch.setattr(resampling, "fit_mle", counting)
        stats = [Statistic.cf(0.5), Statistic.cf(2.0), Statistic("ks"), Statistic("cvm")]
        runs = warp_speed_mc_multi(DataGenerator(NE1), NULL_EXP, stats, 20, 60, master_seed=3)
        failures = runs["KS"].failures
        # one fit plus one bootstrap refit per iteration, whatever the number of statistics
        assert len(calls) == 2 * 20 + 2 * failures
        assert set(runs) == {s.name for s in stats}

    def test_reproducible_across_workers(self):
        stats = [Statistic.cf(1.0), Statistic("cvm")]
        a = warp_speed_mc_multi(DataGenerator(NE1), NULL_EXP, stats, 12, 60, master_seed=4, workers=1)
        b = warp_speed_mc_multi(DataGenerator(NE1), NULL_EXP, stats, 12, 60, master_seed=4, workers=3)
        for k in a:
            np.testing.assert_array_equal(a[k].t_obs, b[k].t_obs)
            np.testing.assert_array_equal(a[k].t_boot, b[k].t_boot)

    def test_abort_on_failures(self, monkeypatch):
        def broken(*a, **k):
            raise FitError("forced")

        monkeypatch.setattr(resampling, "fit_mle", broken)
        with pytest.raises(MonteCarloAbort):
            warp_speed_mc(DataGenerator(NE1), NULL_EXP, Statistic.cf(1.0), 5, 30)

    @pytest.mark.slow
    def test_size_exponential(self):
        run = warp_speed_mc(DataGenerator(NE1), NULL_EXP, Statistic.cf(0.5), 1000, 100, master_seed=2024)
        assert 0.025 <= run.rejection_rate <= 0.08

    @pytest.mark.slow
    def test_power_halfnormal(self):
        gen = DataGenerator(ComposedSpec.normal_halfnormal(1.0, 10.0))
        run = warp_speed_mc(gen, NULL_EXP, Statistic.cf(5.0), 200, 500, master_seed=7)
        assert run.rejection_rate >= 0.90


class TestFullBootstrap:
    def test_outcome_fields(self):
        sample = Sample(0.5 + sample_composed(NE1, 120, 8))
        out = full_bootstrap_test(sample, NULL_EXP, Statistic.cf(2.0), B=49, seed=1)
        assert 1 / 50 <= out.p_value <= 1 and out.B == 49
        assert out.reject == (out.p_value <= 0.05)
        again = full_bootstrap_test(sample, NULL_EXP, Statistic.cf(2.0), B=49, seed=1)
        assert again.p_value == out.p_value and again.value == out.value

    @pytest.mark.slow
    def test_size_calibration(self):
        stat = Statistic.cf(1.0)
        rejections = 0
        for rep in range(200):
            sample = Sample(0.5 + sample_composed(NE1, 100, 10_000 + rep))
            rejections += full_bootstrap_test(sample, NULL_EXP, stat, B=99, seed=rep).reject
        assert 0.015 <= rejections / 200 <= 0.10
