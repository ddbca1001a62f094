"""Python bindings for the bps C++ core."""

from ._bps import (
    ConfigError,
    IoError,
    NumericalError,
    config_hash,
    estimation_experiment,
    exact_score,
    exact_suff_stats,
    kalman_loglik,
    oracle,
    set_num_threads,
    simulate,
    smooth,
    smoothed_means,
    smoothing_experiment,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericalError",
    "config_hash",
    "estimation_experiment",
    "exact_score",
    "exact_suff_stats",
    "kalman_loglik",
    "oracle",
    "set_num_threads",
    "simulate",
    "smooth",
    "smoothed_means",
    "smoothing_experiment",
]
