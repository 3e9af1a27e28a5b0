"""Exception types raised across the package."""


class FreqEstError(Exception):
    """Base class for package errors."""


class DomainError(FreqEstError, ValueError):
    """An argument lies outside the domain of the model."""


class DegeneratePosteriorError(FreqEstError, ArithmeticError):
    """A Bayes update left no usable posterior mass."""


class EstimationFailure(FreqEstError):
    """An estimator could not produce an estimate from the record."""


class ConfigError(FreqEstError, ValueError):
    """A plan configuration is malformed or violates an invariant."""
