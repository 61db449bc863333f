"""Exception hierarchy.

The CLI maps each family to an exit code: configuration problems to 1,
numerical failures to 2, file-system problems to 3.
"""

from __future__ import annotations


class RmtCltError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(RmtCltError, ValueError):
    """Invalid input: bad profile, bad shift, bad distribution, bad config."""


class ProfileLoadError(ValidationError):
    """A variance profile file could not be parsed or violates the assumptions."""


class NumericalError(RmtCltError, ArithmeticError):
    """Base class for failures of a numerical routine."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int, omega: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.omega = omega


class SingularityError(NumericalError):
    """I - A is singular, or its spectral radius guard failed."""


class DegenerateVarianceError(NumericalError):
    """The CLT variance came out non-positive."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValidationError):
    """A command-line or JSON run configuration is malformed."""
