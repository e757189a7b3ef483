"""Parametric bootstrap calibration: warp-speed Monte Carlo and per-dataset tests.

Random streams are keyed by ``(master_seed, cell_key, m, attempt, phase)``
with phase 0 for the Monte Carlo data draw and phase 1 for the bootstrap
draw, so every statistic is fixed by the seed regardless of how iterations
are scheduled across workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cf_stats import CfStatConfig, t_stat_closed
from .classical import cvm_stat, ks_stat, probits
from .distributions import ComposedSpec, composed_cdf, sample_composed, stream
from .estimation import FitError, NullModel, Sample, SfmFit, fit_mle

__all__ = [
    "Statistic",
    "DataGenerator",
    "BootstrapRun",
    "TestOutcome",
    "MonteCarloAbort",
    "bootstrap_refit",
    "single_bootstrap",
    "critical_point",
    "bootstrap_p_value",
    "warp_speed_mc",
    "warp_speed_mc_multi",
    "full_bootstrap_test",
]

log = logging.getLogger(__name__)

PHASE_DATA = 0
PHASE_BOOT = 1
MAX_FAIL_FRACTION = 0.02
_MAX_ATTEMPTS = 100


class MonteCarloAbort(RuntimeError):
    """Too many iterations needed redrawing because a fit failed."""

    def __init__(self, message, failures=0):
        super().__init__(message)
        self.failures = failures


@dataclass(frozen=True)
class Statistic:
    """A test statistic evaluated on a fitted model.

    ``kind`` is ``"cf"`` (the characteristic-function statistic, variant
    taken from the fit's null model), ``"ks"`` or ``"cvm"``.
    """

    kind: str
    lam: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("cf", "ks", "cvm"):
            raise ValueError(f"unknown statistic {self.kind!r}")
        if self.kind == "cf":
            if self.lam is None or not self.lam > 0:
                raise ValueError("the cf statistic needs lambda > 0")
            object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def cf(cls, lam: float) -> "Statistic":
        return cls("cf", lam)

    @property
    def test_name(self) -> str:
        return {"cf": "T", "ks": "KS", "cvm": "CvM"}[self.kind]

    @property
    def name(self) -> str:
        return f"T(lambda={self.lam:g})" if self.kind == "cf" else self.test_name

    def __call__(self, fit: SfmFit) -> float:
        if self.kind == "cf":
            return t_stat_closed(fit.std_residuals, CfStatConfig(self.lam, fit.null_model.cf_variant))
        f0 = probits(fit.residuals, lambda e: composed_cdf(e, fit.composed))
        return ks_stat(f0) if self.kind == "ks" else cvm_stat(f0)


@dataclass(frozen=True)
class DataGenerator:
    """Simulation design ``y = beta_0 + x beta_1.. + eps`` with standard normal regressors."""

    error: ComposedSpec
    beta: tuple = (0.5,)
    n_regressors: int = 0

    def draw(self, n: int, rng: np.random.Generator) -> Sample:
        beta = np.asarray(self.beta, dtype=float)
        if beta.size != self.n_regressors + 1:
            raise ValueError("beta needs an intercept plus one entry per regressor")
        x = rng.standard_normal((n, self.n_regressors)) if self.n_regressors else None
        eps = sample_composed(self.error, n, rng)
        y = beta[0] + eps
        if x is not None:
            y = y + x @ beta[1:]
        return Sample(y, x)


@dataclass
class BootstrapRun:
    statistic: str
    t_obs: np.ndarray
    t_boot: np.ndarray
    alpha: float
    critical: float
    rejection_rate: float
    failures: int = 0

    @property
    def M(self) -> int:
        return self.t_obs.size


@dataclass
class TestOutcome:
    statistic: str
    value: float
    critical: float
    p_value: float
    reject: bool
    alpha: float
    B: int
    failures: int = 0
    fit: Optional[SfmFit] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "value": float(self.value),
            "critical": float(self.critical),
            "p_value": float(self.p_value),
            "reject": bool(self.reject),
            "alpha": float(self.alpha),
            "B": int(self.B),
            "failures": int(self.failures),
        }


def bootstrap_refit(fit: SfmFit, sample: Sample, seed) -> SfmFit:
    """Draw errors from the fitted null, rebuild ``y*`` and refit (warm start)."""
    eps = sample_composed(fit.composed, sample.n, seed)
    fitted = sample.design @ fit.beta if sample.n_params else 0.0
    boot = sample.with_y(fitted + eps)
    refit = fit_mle(boot, fit.null_model, start=(fit.beta, fit.sigma_v, fit.theta))
    if not refit.converged:
        raise FitError("bootstrap refit did not converge")
    return refit


def single_bootstrap(fit: SfmFit, sample: Sample, statistic, seed) -> float:
    """One parametric-bootstrap replicate of ``statistic``."""
    return float(statistic(bootstrap_refit(fit, sample, seed)))


def critical_point(boot_stats, alpha: float) -> float:
    """Order statistic ``T_(M - floor(alpha M))`` of the bootstrap values (1-based)."""
    t = np.sort(np.asarray(boot_stats, dtype=float).ravel())
    M = t.size
    if M < 1:
        raise ValueError("need at least one bootstrap statistic")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = M - math.floor(alpha * M + 1e-9)
    k = min(max(k, 1), M)
    return float(t[k - 1])


def bootstrap_p_value(t_obs: float, boot_stats) -> float:
    """``(1 + #{T*_b >= T}) / (B + 1)``."""
    t = np.asarray(boot_stats, dtype=float).ravel()
    return (1 + int(np.sum(t >= t_obs))) / (t.size + 1)


def _iteration(job):
    generator, null_model, statistics, n, master_seed, cell_key, m = job
    failures = 0
    for attempt in range(_MAX_ATTEMPTS):
        sample = generator.draw(n, stream(master_seed, cell_key, m, attempt, PHASE_DATA))
        try:
            fit = fit_mle(sample, null_model)
            if not fit.converged:
                raise FitError("fit did not converge")
            refit = bootstrap_refit(fit, sample, stream(master_seed, cell_key, m, attempt, PHASE_BOOT))
        except FitError as exc:
            failures += 1
            log.debug("iteration %d attempt %d redrawn: %s", m, attempt, exc)
            continue
        t_obs = [float(s(fit)) for s in statistics]
        t_boot = [float(s(refit)) for s in statistics]
        return t_obs, t_boot, failures
    raise MonteCarloAbort(f"iteration {m} failed {_MAX_ATTEMPTS} times", failures)


def _run_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) < 2:
        return [_iteration(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_iteration, jobs, chunksize=chunk))


def warp_speed_mc_multi(
    generator: DataGenerator,
    null_model: NullModel,
    statistics: Sequence,
    M: int,
    n: int,
    alpha: float = 0.05,
    master_seed: int = 0,
    cell_key: int = 0,
    workers: int = 1,
) -> dict:
    """Warp-speed bootstrap for several statistics on shared datasets.

    Each Monte Carlo iteration draws one dataset, fits the null once and
    evaluates every statistic on the same residuals; one bootstrap dataset
    is then drawn from the fitted null, refitted, and every statistic is
    evaluated again. Critical points come from the pooled M bootstrap
    values of each statistic.

    Returns
    -------
    dict
        ``statistic.name -> BootstrapRun``
    """
    if M < 1:
        raise ValueError("M must be positive")
    statistics = list(statistics)
    jobs = [(generator, null_model, statistics, n, master_seed, cell_key, m) for m in range(M)]
    results = _run_jobs(jobs, workers)
    failures = sum(r[2] for r in results)
    if failures > MAX_FAIL_FRACTION * M:
        raise MonteCarloAbort(f"{failures} failed fits exceed {MAX_FAIL_FRACTION:.0%} of M={M}", failures)
    t_obs = np.array([r[0] for r in results], dtype=float).reshape(M, len(statistics))
    t_boot = np.array([r[1] for r in results], dtype=float).reshape(M, len(statistics))
    runs = {}
    for i, stat in enumerate(statistics):
        crit = critical_point(t_boot[:, i], alpha)
        runs[stat.name] = BootstrapRun(
            statistic=stat.name,
            t_obs=t_obs[:, i].copy(),
            t_boot=t_boot[:, i].copy(),
            alpha=alpha,
            critical=crit,
            rejection_rate=float(np.mean(t_obs[:, i] > crit)),
            failures=failures,
        )
    return runs


def warp_speed_mc(generator, null_model, statistic, M, n, alpha=0.05, master_seed=0, cell_key=0, workers=1) -> BootstrapRun:
    """Single-statistic form of :func:`warp_speed_mc_multi`."""
    runs = warp_speed_mc_multi(generator, null_model, [statistic], M, n, alpha, master_seed, cell_key, workers)
    return runs[statistic.name]


def _boot_job(job):
    fit, sample, statistic, seed, b = job
    failures = 0
    for attempt in range(_MAX_ATTEMPTS):
        try:
            return single_bootstrap(fit, sample, statistic, stream(seed, b, attempt, PHASE_BOOT)), failures
        except FitError:
            failures += 1
    raise MonteCarloAbort(f"bootstrap replicate {b} failed {_MAX_ATTEMPTS} times", failures)


def full_bootstrap_test(
    sample: Sample,
    null_model: NullModel,
    statistic,
    B: int = 499,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
) -> TestOutcome:
    """Conventional parametric-bootstrap test of one dataset.

    p-value is ``(1 + #{T*_b >= T}) / (B + 1)``; the test rejects when
    ``p <= alpha``. Failed bootstrap refits are redrawn; more than 2% of
    ``B`` failures aborts with :class:`MonteCarloAbort`.
    """
    if B < 1:
        raise ValueError("B must be positive")
    fit = fit_mle(sample, null_model)
    if not fit.converged:
        raise FitError("fit of the observed sample did not converge")
    t_obs = float(statistic(fit))
    jobs = [(fit, sample, statistic, seed, b) for b in range(B)]
    if workers <= 1:
        results = [_boot_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_boot_job, jobs, chunksize=max(1, B // (4 * workers))))
    failures = sum(r[1] for r in results)
    if failures > MAX_FAIL_FRACTION * B:
        raise MonteCarloAbort(f"{failures} failed bootstrap refits exceed {MAX_FAIL_FRACTION:.0%} of B={B}", failures)
    t_boot = np.array([r[0] for r in results])
    p_value = bootstrap_p_value(t_obs, t_boot)
    return TestOutcome(
        statistic=getattr(statistic, "name", str(statistic)),
        value=t_obs,
        critical=critical_point(t_boot, alpha),
        p_value=p_value,
        reject=p_value <= alpha,
        alpha=alpha,
        B=B,
        failures=failures,
        fit=fit,
    )
