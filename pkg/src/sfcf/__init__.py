"""Characteristic-function goodness-of-fit tests for stochastic frontier models."""

__version__ = "0.1.0"

from .cf_stats import CfStatConfig, CfVariant, limit_stat, t_stat_closed, t_stat_quadrature
from .classical import cvm_stat, ks_stat
from .distributions import ComposedSpec, Orientation, sample_composed
from .estimation import NullModel, Sample, SfmFit, fit_mle
from .resampling import Statistic, full_bootstrap_test, warp_speed_mc

__all__ = [
    "CfStatConfig",
    "CfVariant",
    "ComposedSpec",
    "NullModel",
    "Orientation",
    "Sample",
    "SfmFit",
    "Statistic",
    "cvm_stat",
    "fit_mle",
    "full_bootstrap_test",
    "ks_stat",
    "limit_stat",
    "sample_composed",
    "t_stat_closed",
    "t_stat_quadrature",
    "warp_speed_mc",
]
