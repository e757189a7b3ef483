"""Noise, inefficiency and composed-error laws.

The composed error of a production frontier is ``eps = v - u`` and of a cost
frontier ``eps = v + u``, with ``v ~ N(0, sigma_v^2)`` and ``u >= 0`` drawn
from one of the inefficiency laws below.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "Orientation",
    "NoiseSpec",
    "Exponential",
    "Gamma",
    "HalfNormal",
    "IneffSpec",
    "ComposedSpec",
    "QuadratureError",
    "as_generator",
    "stream",
    "sample_composed",
    "log_ndtr",
    "normexp_logpdf",
    "normexp_density",
    "composed_logpdf",
    "composed_density",
    "composed_density_quadrature",
    "composed_cdf",
    "composed_cdf_quadrature",
    "null_cf",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)
_TAIL_MASS = 1e-13


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class Orientation(str, enum.Enum):
    PRODUCTION = "production"
    COST = "cost"

    @property
    def sign(self) -> int:
        """-1 for ``v - u``, +1 for ``v + u``."""
        return -1 if self is Orientation.PRODUCTION else 1


def _check_positive(**params: float) -> None:
    for name, value in params.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma_v: float

    def __post_init__(self):
        _check_positive(sigma_v=self.sigma_v)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sigma_v * rng.standard_normal(n)

    def cf(self, t):
        return np.exp(-0.5 * (self.sigma_v * np.asarray(t, dtype=float)) ** 2)


@dataclass(frozen=True)
class Exponential:
    """Exp(theta) with density ``exp(-x/theta)/theta``."""

    theta: float

    def __post_init__(self):
        _check_positive(theta=self.theta)

    @property
    def scale(self) -> float:
        return self.theta

    def mean(self) -> float:
        return self.theta

    def var(self) -> float:
        return self.theta**2

    def sample(self, rng, n):
        return self.theta * rng.standard_exponential(n)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.theta) / self.theta, 0.0)

    def upper_quantile(self, tail: float) -> float:
        return -self.theta * math.log(tail)

    def cf(self, t):
        return 1.0 / (1.0 - 1j * self.theta * np.asarray(t, dtype=float))

    def describe(self) -> str:
        return f"Exp(theta={self.theta:g})"


@dataclass(frozen=True)
class Gamma:
    """Gamma(kappa, theta) with shape ``kappa`` and scale ``theta``."""

    kappa: float
    theta: float

    def __post_init__(self):
        _check_positive(kappa=self.kappa, theta=self.theta)

    @property
    def scale(self) -> float:
        return self.theta

    def mean(self) -> float:
        return self.kappa * self.theta

    def var(self) -> float:
        return self.kappa * self.theta**2

    def sample(self, rng, n):
        if self.kappa == 2:
            # exact and cheap for the shape used by the gamma null
            return self.theta * (rng.standard_exponential(n) + rng.standard_exponential(n))
        return self.theta * rng.standard_gamma(self.kappa, n)

    def pdf(self, x):
        return stats.gamma.pdf(x, self.kappa, scale=self.theta)

    def upper_quantile(self, tail: float) -> float:
        return float(stats.gamma.isf(tail, self.kappa, scale=self.theta))

    def cf(self, t):
        return (1.0 - 1j * self.theta * np.asarray(t, dtype=float)) ** (-self.kappa)

    def describe(self) -> str:
        return f"Gamma(kappa={self.kappa:g},theta={self.theta:g})"


@dataclass(frozen=True)
class HalfNormal:
    """|N(0, sigma_u^2)|, density ``2 phi(x; sigma_u)`` on ``x >= 0``."""

    sigma_u: float

    def __post_init__(self):
        _check_positive(sigma_u=self.sigma_u)

    @property
    def scale(self) -> float:
        return self.sigma_u

    def mean(self) -> float:
        return self.sigma_u * math.sqrt(2.0 / math.pi)

    def var(self) -> float:
        return self.sigma_u**2 * (1.0 - 2.0 / math.pi)

    def sample(self, rng, n):
        return np.abs(self.sigma_u * rng.standard_normal(n))

    def pdf(self, x):
        return stats.halfnorm.pdf(x, scale=self.sigma_u)

    def upper_quantile(self, tail: float) -> float:
        return float(stats.halfnorm.isf(tail, scale=self.sigma_u))

    def cf(self, t):
        a = self.sigma_u * np.asarray(t, dtype=float)
        # exp(-a^2/2) * erfi(a/sqrt2) rewritten through Dawson's integral
        return np.exp(-0.5 * a**2) + 1j * (2.0 / math.sqrt(math.pi)) * special.dawsn(a / math.sqrt(2.0))

    def describe(self) -> str:
        return f"HN(sigma_u={self.sigma_u:g})"


IneffSpec = Union[Exponential, Gamma, HalfNormal]


@dataclass(frozen=True)
class ComposedSpec:
    noise: NoiseSpec
    ineff: IneffSpec
    orientation: Orientation = Orientation.PRODUCTION

    @classmethod
    def normal_exponential(cls, sigma_v, theta, orientation=Orientation.PRODUCTION):
        return cls(NoiseSpec(sigma_v), Exponential(theta), Orientation(orientation))

    @classmethod
    def normal_gamma(cls, sigma_v, kappa, theta, orientation=Orientation.PRODUCTION):
        return cls(NoiseSpec(sigma_v), Gamma(kappa, theta), Orientation(orientation))

    @classmethod
    def normal_halfnormal(cls, sigma_v, sigma_u, orientation=Orientation.PRODUCTION):
        return cls(NoiseSpec(sigma_v), HalfNormal(sigma_u), Orientation(orientation))

    @property
    def sigma_v(self) -> float:
        return self.noise.sigma_v

    def mean(self) -> float:
        return self.orientation.sign * self.ineff.mean()

    def var(self) -> float:
        return self.noise.sigma_v**2 + self.ineff.var()

    def describe(self) -> str:
        return f"N(0,{self.sigma_v:g}^2){'-' if self.orientation.sign < 0 else '+'}{self.ineff.describe()}"


# -- random streams ---------------------------------------------------------


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, *key)``.

    Streams are derived through :class:`numpy.random.SeedSequence` spawn keys,
    so the draw for a given key never depends on which other keys were used
    or in what order.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)


def sample_composed(spec: ComposedSpec, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. composed errors.

    ``seed`` is an integer (fully determines the output) or a Generator.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    v = spec.noise.sample(rng, n)
    u = spec.ineff.sample(rng, n)
    return v + spec.orientation.sign * u


# -- closed-form densities ----------------------------------------------------


def log_ndtr(x):
    """log of the standard normal CDF, accurate far into the lower tail."""
    return special.log_ndtr(x)


def _log_tn1(z):
    """log(z*Phi(z) + phi(z)), stable in both tails."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    log_phi = -0.5 * z**2 - math.log(_SQRT2PI)
    pos = z >= 0.0
    mid = (z < 0.0) & (z >= -10.0)
    far = z < -10.0
    zp = z[pos]
    out[pos] = np.log(zp * special.ndtr(zp) + np.exp(log_phi[pos]))
    zm = z[mid]
    # Phi(z)/phi(z) = sqrt(pi/2) * erfcx(-z/sqrt2)
    mills = math.sqrt(math.pi / 2.0) * special.erfcx(-zm / math.sqrt(2.0))
    out[mid] = log_phi[mid] + np.log1p(zm * mills)
    if far.any():
        w = 1.0 / z[far] ** 2
        # 1/z^2 - 3/z^4 + 15/z^6 - ...
        term = w.copy()
        acc = w.copy()
        for k in range(2, 16):
            term = -term * (2 * k - 1) * w
            acc += term
        out[far] = log_phi[far] + np.log(acc)
    return out


def normexp_logpdf(eps, sigma_v: float, theta: float):
    """Log density of ``v - u`` with v normal, u exponential (vectorised)."""
    _check_positive(sigma_v=sigma_v, theta=theta)
    eps = np.asarray(eps, dtype=float)
    return (
        -math.log(theta)
        + log_ndtr(-eps / sigma_v - sigma_v / theta)
        + eps / theta
        + sigma_v**2 / (2.0 * theta**2)
    )


def normexp_density(eps, sigma_v: float, theta: float):
    return np.exp(normexp_logpdf(eps, sigma_v, theta))


def _normgamma2_logpdf(eps, sigma_v, theta):
    # v - u with u ~ Gamma(2, theta): completing the square leaves the first
    # truncated-normal moment of N(mu, sigma_v^2) over (0, inf).
    eps = np.asarray(eps, dtype=float)
    z = (-eps - sigma_v**2 / theta) / sigma_v
    out = (
        -2.0 * math.log(theta)
        + eps / theta
        + sigma_v**2 / (2.0 * theta**2)
        + math.log(sigma_v)
        + _log_tn1(z)
    )
    return out.reshape(eps.shape)


def _has_closed_form(spec: ComposedSpec) -> bool:
    ineff = spec.ineff
    return isinstance(ineff, Exponential) or (isinstance(ineff, Gamma) and ineff.kappa in (1, 2))


def composed_logpdf(eps, spec: ComposedSpec):
    """Log density of the composed error.

    Closed forms cover the exponential and Gamma(kappa in {1, 2}) laws;
    everything else goes through :func:`composed_density_quadrature`.
    """
    eps = np.asarray(eps, dtype=float)
    prod_eps = eps if spec.orientation is Orientation.PRODUCTION else -eps
    ineff, s = spec.ineff, spec.sigma_v
    if isinstance(ineff, Exponential) or (isinstance(ineff, Gamma) and ineff.kappa == 1):
        return normexp_logpdf(prod_eps, s, ineff.theta)
    if isinstance(ineff, Gamma) and ineff.kappa == 2:
        return _normgamma2_logpdf(prod_eps, s, ineff.theta)
    vals = np.vectorize(lambda e: composed_density_quadrature(e, spec))(eps)
    with np.errstate(divide="ignore"):
        return np.log(vals)


def composed_density(eps, spec: ComposedSpec):
    return np.exp(composed_logpdf(eps, spec))


# -- quadrature routes --------------------------------------------------------


def _quad(func, a, b, points=None, epsrel=1e-12, abs_limit=1e-10):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, points=points, epsabs=0.0, epsrel=epsrel, limit=500)
    if not np.isfinite(val) or err > max(abs_limit, 1e-8 * abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge (estimate {val}, error {err})")
    return val, err


def _convolution_range(eps: float, spec: ComposedSpec):
    """Integration range in the standardised variable s = u / scale."""
    scale = spec.ineff.scale
    s_tail = spec.ineff.upper_quantile(_TAIL_MASS) / scale
    peak = spec.orientation.sign * eps / scale  # u where v = 0
    upper = max(s_tail, peak + 40.0 * spec.sigma_v / scale)
    points = [peak] if 0.0 < peak < upper else None
    return upper, points


def composed_density_quadrature(eps: float, spec: ComposedSpec) -> float:
    """Convolution integral ``int_0^inf f_v(eps -/+ u) f_u(u) du`` by adaptive quadrature.

    The inefficiency variable is rescaled to ``s = u / scale`` and integrated
    up to the point where the truncated tail mass is below 1e-13, extended
    if the normal peak lies further out.

    Raises
    ------
    QuadratureError
        If the quadrature error estimate exceeds 1e-10 absolute (or 1e-8
        relative for densities far in the tail).
    """
    eps = float(eps)
    scale = spec.ineff.scale
    sigma = spec.sigma_v
    sign = spec.orientation.sign
    upper, points = _convolution_range(eps, spec)

    def integrand(s):
        u = scale * s
        v = eps - sign * u
        return scale * stats.norm.pdf(v, scale=sigma) * float(spec.ineff.pdf(u))

    val, _ = _quad(integrand, 0.0, upper, points=points)
    return val


def _cdf_closed(eps, spec: ComposedSpec):
    # P(v - u <= e) = Phi(e/sigma) + theta * sum_{k<=kappa} f_k(e), with f_k the
    # normal/Gamma(k, theta) density; follows from integrating by parts.
    ineff, s = spec.ineff, spec.sigma_v
    kappa = 1 if isinstance(ineff, Exponential) else int(ineff.kappa)
    out = special.ndtr(eps / s) + ineff.theta * normexp_density(eps, s, ineff.theta)
    if kappa == 2:
        out = out + ineff.theta * np.exp(_normgamma2_logpdf(eps, s, ineff.theta))
    return np.clip(out, 0.0, 1.0)


def composed_cdf_quadrature(eps: float, spec: ComposedSpec) -> float:
    """F(eps) = E_u[Phi((eps +/- u)/sigma_v)] by adaptive quadrature."""
    eps = float(eps)
    scale = spec.ineff.scale
    sigma = spec.sigma_v
    sign = spec.orientation.sign
    upper, points = _convolution_range(eps, spec)

    def integrand(s):
        u = scale * s
        return scale * special.ndtr((eps - sign * u) / sigma) * float(spec.ineff.pdf(u))

    val, _ = _quad(integrand, 0.0, upper, points=points)
    return float(min(max(val, 0.0), 1.0))


def composed_cdf(eps, spec: ComposedSpec, method: str = "auto"):
    """Composed-error CDF.

    ``method="auto"`` uses the closed form when one exists (exponential and
    Gamma with integer shape 1 or 2), quadrature otherwise.
    """
    eps_arr = np.asarray(eps, dtype=float)
    if method not in ("auto", "closed", "quad"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quad" and _has_closed_form(spec):
        if spec.orientation is Orientation.PRODUCTION:
            out = _cdf_closed(eps_arr, spec)
        else:
            out = 1.0 - _cdf_closed(-eps_arr, spec)
    elif method == "closed":
        raise ValueError(f"no closed-form CDF for {spec.ineff.describe()}")
    else:
        out = np.vectorize(lambda e: composed_cdf_quadrature(e, spec))(eps_arr)
    return float(out) if np.ndim(out) == 0 else out


def null_cf(t, spec: ComposedSpec):
    """Characteristic function of the composed error, ``phi_v(t) phi_u(-/+t)``."""
    t = np.asarray(t, dtype=float)
    return spec.noise.cf(t) * spec.ineff.cf(spec.orientation.sign * t)
