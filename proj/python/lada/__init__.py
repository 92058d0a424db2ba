"""Latent-space data assimilation toolkit.

A convolutional autoencoder compresses 2-D scalar fields into a small latent
state, an LSTM advances that state in time, and a Kalman correction fuses
encoded observations into the forecast. The heavy lifting lives in the C++
extension; this package re-exports it.
"""

from lada._core import (
    Autoencoder,
    ConfigurationError,
    NumericalFailure,
    Surrogate,
    analysis_update,
    default_config,
    kalman_gain,
    run_pipeline,
    sample_covariance,
    simulate,
    split,
)

__all__ = [
    "Autoencoder",
    "ConfigurationError",
    "NumericalFailure",
    "Surrogate",
    "analysis_update",
    "default_config",
    "kalman_gain",
    "run_pipeline",
    "sample_covariance",
    "simulate",
    "split",
]
