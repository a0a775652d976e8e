"""Exception hierarchy.

Numeric failures always carry the achieved quantity (residual, tolerance,
condition estimate) so callers can report instead of guessing.
"""


class GffpercError(Exception):
    """Base class for all package errors."""


class GeometryError(GffpercError):
    """A set or box violates domain bounds, margins, or alignment."""


class NonTransientError(GffpercError):
    """Potential-theory operation requested in a recurrent dimension (d < 3)."""


class AccuracyError(GffpercError):
    """Quadrature or series did not reach the requested tolerance."""

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class SolverError(GffpercError):
    """Linear solve failed or left a residual above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConditioningError(SolverError):
    """Gram matrix too ill-conditioned to trust the solve."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class SizeError(GffpercError):
    """Problem too large for the dense path; caller should switch method."""


class ScaleError(GffpercError):
    """Scale parameters incompatible (cell does not divide, L too small...)."""


class ConfigError(GffpercError):
    """Invalid run configuration; message names the offending field."""
