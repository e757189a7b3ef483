"""Kolmogorov-Smirnov and Cramer-von Mises statistics on fitted null CDF values."""

from __future__ import annotations

import numpy as np

__all__ = ["ks_stat", "cvm_stat", "probits"]


def _checked(f0) -> np.ndarray:
    f0 = np.asarray(f0, dtype=float).ravel()
    if f0.size == 0:
        raise ValueError("need at least one CDF value")
    if np.any(np.diff(f0) < 0):
        raise ValueError("CDF values must be sorted ascending")
    if f0[0] < 0 or f0[-1] > 1:
        raise ValueError("CDF values must lie in [0, 1]")
    return f0


def probits(residuals, cdf) -> np.ndarray:
    """Sorted null CDF values ``F0(eps_j)`` ready for the statistics below."""
    # F0 is monotone, so sorting residuals first is equivalent; stable sort
    # keeps ties in input order
    return np.asarray(cdf(np.sort(np.asarray(residuals, dtype=float), kind="stable")), dtype=float)


def ks_stat(f0) -> float:
    """``max(D+, D-)`` with ``D+ = max(j/n - F0j)``, ``D- = max(F0j - (j-1)/n)``."""
    f0 = _checked(f0)
    n = f0.size
    j = np.arange(1, n + 1)
    d_plus = np.max(j / n - f0)
    d_minus = np.max(f0 - (j - 1) / n)
    return float(max(d_plus, d_minus))


def cvm_stat(f0) -> float:
    """``1/(12n) + sum (F0j - (2j-1)/(2n))^2``."""
    f0 = _checked(f0)
    n = f0.size
    j = np.arange(1, n + 1)
    return float(1.0 / (12 * n) + np.sum((f0 - (2 * j - 1) / (2 * n)) ** 2))
