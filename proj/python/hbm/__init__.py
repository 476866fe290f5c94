"""Hierarchical Bayesian model updating and reliability analysis."""

from ._hbm import (
    ConfigError,
    PhaseError,
    derive_seed,
    dynamics,
    fit,
    generate,
    linear,
    mvn_logpdf,
    mvn_sample,
    num_threads,
    reliability,
    report,
    set_num_threads,
    std_normal_cdf,
    std_normal_logcdf,
    std_normal_quantile,
    subset_simulation,
    tmcmc,
)

__version__ = "0.1.0"
