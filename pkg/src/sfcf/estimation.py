"""Maximum-likelihood fitting of the stochastic frontier model ``y = X b + eps``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .cf_stats import CfVariant
from .distributions import (
    ComposedSpec,
    Orientation,
    composed_logpdf,
    normexp_logpdf,
)

__all__ = [
    "EXPONENTIAL",
    "GAMMA",
    "NullModel",
    "Sample",
    "SfmFit",
    "FitError",
    "ols_init",
    "normexp_loglik",
    "normgamma_loglik",
    "loglik",
    "fit_mle",
]

EXPONENTIAL = "exponential"
GAMMA = "gamma"

GTOL = 1e-6
XTOL = 1e-10
# (d log sigma_v, d log theta) offsets tried when the first start fails
_RESTART_OFFSETS = ((-0.3, 0.7), (0.3, -0.7), (-1.0, 1.5))


class FitError(RuntimeError):
    """The likelihood could not be maximised (after restarts)."""


@dataclass(frozen=True)
class NullModel:
    """Composed-error law under test: normal noise with exponential or gamma inefficiency.

    ``kappa`` is only used by the gamma family; the gamma test statistic is
    defined for ``kappa = 2``.
    """

    family: str = EXPONENTIAL
    orientation: Orientation = Orientation.PRODUCTION
    kappa: float = 2.0

    def __post_init__(self):
        if self.family not in (EXPONENTIAL, GAMMA):
            raise ValueError(f"unknown null family {self.family!r}")
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @classmethod
    def exponential(cls, orientation=Orientation.PRODUCTION):
        return cls(EXPONENTIAL, orientation)

    @classmethod
    def gamma2(cls, orientation=Orientation.PRODUCTION):
        return cls(GAMMA, orientation, 2.0)

    @property
    def shape(self) -> float:
        return 1.0 if self.family == EXPONENTIAL else float(self.kappa)

    @property
    def name(self) -> str:
        base = "normal/exponential" if self.family == EXPONENTIAL else f"normal/gamma(kappa={self.kappa:g})"
        return base if self.orientation is Orientation.PRODUCTION else base + " cost"

    def composed(self, sigma_v: float, theta: float) -> ComposedSpec:
        if self.family == EXPONENTIAL:
            return ComposedSpec.normal_exponential(sigma_v, theta, self.orientation)
        return ComposedSpec.normal_gamma(sigma_v, self.kappa, theta, self.orientation)

    @property
    def cf_variant(self) -> CfVariant:
        cost = self.orientation is Orientation.COST
        if self.family == EXPONENTIAL:
            return CfVariant.EXP_COST if cost else CfVariant.EXP_PRODUCTION
        if self.kappa != 2:
            raise ValueError("the characteristic-function test is defined for kappa = 2 only")
        return CfVariant.GAMMA2_COST if cost else CfVariant.GAMMA2


@dataclass(frozen=True)
class Sample:
    """Observations ``y`` (n,) and regressors ``x`` (n, d), d >= 0.

    When ``intercept`` is true a column of ones is prepended to form the
    design matrix; the first coefficient is then the intercept.
    """

    y: np.ndarray
    x: np.ndarray = field(default=None)
    intercept: bool = True

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.empty((y.size, 0)) if self.x is None else np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != y.size:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if y.size < self.n_params + 2:
            raise ValueError(f"need n >= {self.n_params + 2} observations, got {y.size}")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def n_params(self) -> int:
        return self.x.shape[1] + int(self.intercept)

    @property
    def design(self) -> np.ndarray:
        if self.intercept:
            return np.hstack([np.ones((self.n, 1)), self.x])
        return self.x

    def with_y(self, y) -> "Sample":
        return Sample(y, self.x, self.intercept)


@dataclass
class SfmFit:
    beta: np.ndarray
    sigma_v: float
    theta: float
    loglik: float
    residuals: np.ndarray
    std_residuals: np.ndarray
    converged: bool
    null_model: NullModel
    grad_norm: float = float("nan")
    n_iter: int = 0

    @property
    def composed(self) -> ComposedSpec:
        return self.null_model.composed(self.sigma_v, self.theta)

    def to_dict(self) -> dict:
        return {
            "null_model": self.null_model.name,
            "beta": [float(b) for b in self.beta],
            "sigma_v": float(self.sigma_v),
            "theta": float(self.theta),
            "loglik": float(self.loglik),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
            "n_iter": int(self.n_iter),
            "n": int(self.residuals.size),
        }


# -- likelihoods ---------------------------------------------------------------


def _residuals(beta, sample: Sample) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if sample.n_params == 0:
        return sample.y.copy()
    return sample.y - sample.design @ beta


def normexp_loglik(beta, sigma_v, theta, sample: Sample, orientation=Orientation.PRODUCTION) -> float:
    """Normal/exponential log-likelihood, evaluated in the log domain."""
    eps = _residuals(beta, sample)
    if Orientation(orientation) is Orientation.COST:
        eps = -eps
    return float(np.sum(normexp_logpdf(eps, sigma_v, theta)))


def normgamma_loglik(beta, sigma_v, theta, kappa, sample: Sample, orientation=Orientation.PRODUCTION) -> float:
    """Normal/gamma log-likelihood.

    Shapes 1 and 2 use the closed-form convolution density; any other shape
    integrates the convolution numerically for every observation.
    """
    eps = _residuals(beta, sample)
    spec = ComposedSpec.normal_gamma(sigma_v, kappa, theta, orientation)
    return float(np.sum(composed_logpdf(eps, spec)))


def loglik(beta, sigma_v, theta, sample: Sample, null_model: NullModel) -> float:
    if null_model.family == EXPONENTIAL:
        return normexp_loglik(beta, sigma_v, theta, sample, null_model.orientation)
    return normgamma_loglik(beta, sigma_v, theta, null_model.kappa, sample, null_model.orientation)


# -- starting values -------------------------------------------------------------


def ols_init(sample: Sample, null_model: Optional[NullModel] = None):
    """Corrected-OLS starting values ``(beta0, sigma0, theta0)``.

    The inefficiency scale comes from the third central moment of the OLS
    residuals (``m3 = -2 kappa theta^3`` for a production frontier), clamped
    below at 5% of the residual sd when the skew has the wrong sign. The
    intercept is shifted by the inefficiency mean ``kappa * theta0``.
    """
    null_model = null_model or NullModel()
    kappa = null_model.shape
    sign = null_model.orientation.sign
    X = sample.design
    if X.shape[1]:
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise FitError("design matrix is rank deficient")
        beta0, *_ = np.linalg.lstsq(X, sample.y, rcond=None)
    else:
        beta0 = np.empty(0)
    r = _residuals(beta0, sample)
    r = r - r.mean()
    m2 = float(np.mean(r**2))
    m3 = float(np.mean(r**3))
    floor = 0.05 * math.sqrt(m2)
    skew_target = sign * m3 / (2.0 * kappa)  # = theta^3 under the null
    theta0 = max(skew_target ** (1.0 / 3.0), floor) if skew_target > 0 else floor
    sigma0 = math.sqrt(max(m2 - kappa * theta0**2, 0.01 * m2))
    beta0 = np.array(beta0, dtype=float)
    if sample.intercept:
        beta0[0] -= sign * kappa * theta0
    return beta0, sigma0, theta0


# -- optimisation ----------------------------------------------------------------


def _central_gradient(f, p):
    g = np.empty_like(p)
    for i in range(p.size):
        h = 1e-6 * (1.0 + abs(p[i]))
        up = p.copy()
        dn = p.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (up[i] - dn[i])
    return g


def _objective(sample: Sample, null_model: NullModel):
    k = sample.n_params
    n = sample.n

    def f(p):
        sigma_v = math.exp(p[k])
        theta = math.exp(p[k + 1])
        if not (0.0 < sigma_v < np.inf and 0.0 < theta < np.inf):
            return np.inf
        value = loglik(p[:k], sigma_v, theta, sample, null_model)
        return -value / n if np.isfinite(value) else np.inf

    return f


def _bfgs(f, p0, maxiter):
    res = optimize.minimize(
        f,
        p0,
        jac=lambda p: _central_gradient(f, p),
        method="BFGS",
        options={"gtol": GTOL, "xrtol": XTOL, "maxiter": maxiter},
    )
    return np.asarray(res.x, dtype=float), int(res.nit)


def _minimise(f, p0, maxiter, polish=2):
    """BFGS run plus up to ``polish`` restarts from the iterate with a fresh Hessian.

    Converged when the gradient sup-norm is <= GTOL, or when a fresh restart
    cannot move the iterate by more than XTOL (relative) without worsening
    the objective; the latter covers maxima on the boundary of the
    parameter space (a scale parameter driven towards zero).
    """
    p, nit = _bfgs(f, p0, maxiter)
    value = float(f(p))
    for _ in range(polish + 1):
        if not np.isfinite(value):
            return p, value, False, np.inf, nit
        gnorm = float(np.max(np.abs(_central_gradient(f, p)), initial=0.0))
        if gnorm <= GTOL:
            return p, value, True, gnorm, nit
        q, more = _bfgs(f, p, maxiter)
        nit += more
        q_value = float(f(q))
        stalled = np.max(np.abs(q - p), initial=0.0) <= XTOL * (1.0 + np.max(np.abs(p), initial=0.0))
        if q_value <= value:
            p, value = q, q_value
        if stalled or abs(value - q_value) <= 1e-12 * (1.0 + abs(value)) and more == 0:
            return p, value, True, gnorm, nit
    gnorm = float(np.max(np.abs(_central_gradient(f, p)), initial=0.0))
    return p, value, gnorm <= GTOL, gnorm, nit


def fit_mle(
    sample: Sample,
    null_model: Optional[NullModel] = None,
    start: Optional[Sequence] = None,
    maxiter: int = 400,
    restarts: bool = True,
) -> SfmFit:
    """Maximise the null log-likelihood over ``(beta, log sigma_v, log theta)``.

    BFGS with central-difference gradients on the per-observation mean
    log-likelihood; convergence means a gradient sup-norm of at most 1e-6
    at the returned point. ``start`` is an optional ``(beta, sigma_v, theta)``
    warm start (bootstrap refits pass the parent fit). If the first run
    does not converge, three perturbed starts are tried and the best
    iterate is kept; ``converged`` may still be false, and the caller
    decides what to do with it.
    """
    null_model = null_model or NullModel()
    if start is None:
        start = ols_init(sample, null_model)
    beta0, sigma0, theta0 = start
    k = sample.n_params
    p0 = np.concatenate([np.asarray(beta0, dtype=float).ravel()[:k], [math.log(sigma0), math.log(theta0)]])
    f = _objective(sample, null_model)

    best = _minimise(f, p0, maxiter)
    if not best[2] and restarts:
        for d_sigma, d_theta in _RESTART_OFFSETS:
            p = p0.copy()
            p[k] += d_sigma
            p[k + 1] += d_theta
            if sample.intercept:
                # keep the fitted mean of y unchanged
                p[0] += null_model.orientation.sign * null_model.shape * (math.exp(p0[k + 1]) - math.exp(p[k + 1]))
            trial = _minimise(f, p, maxiter)
            if (trial[2], -trial[1]) > (best[2], -best[1]):
                best = trial
    p, value, converged, gnorm, nit = best
    if not np.isfinite(value):
        raise FitError("log-likelihood is not finite at any start")
    beta = p[:k].copy()
    sigma_v = math.exp(p[k])
    theta = math.exp(p[k + 1])
    resid = _residuals(beta, sample)
    return SfmFit(
        beta=beta,
        sigma_v=sigma_v,
        theta=theta,
        loglik=-value * sample.n,
        residuals=resid,
        std_residuals=resid / theta,
        converged=bool(converged),
        null_model=null_model,
        grad_norm=gnorm,
        n_iter=nit,
    )
