"""Frequency estimation for a single qubit: likelihoods, bounds, adaptive design, Monte Carlo risk."""
from .errors import ConfigError, DegeneratePosteriorError, DomainError, EstimationFailure, FreqEstError
from .kernels import BACKEND
from .model import INF, Measurement, Record, TrueModel

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DegeneratePosteriorError",
    "DomainError",
    "EstimationFailure",
    "FreqEstError",
    "INF",
    "Measurement",
    "Record",
    "TrueModel",
]
