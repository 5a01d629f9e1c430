"""Exception types shared across the package."""


class CamError(Exception):
    """Base class for all package errors."""


class CycleError(CamError):
    """Raised when an edge set contains a directed cycle."""


class DimensionMismatch(CamError, ValueError):
    """Raised when two objects disagree on the number of nodes."""


class InvalidData(CamError, ValueError):
    """Raised on NaN/Inf or otherwise unusable input data."""


class DegenerateColumn(CamError, ValueError):
    """Raised when a column has too few distinct values for a spline basis."""


class SingularFit(CamError):
    """Raised when a penalized least-squares system cannot be solved.

    ``node`` is attached by callers that know which regression failed.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ExplicitRefusal(CamError):
    """Raised when a request is deliberately refused (e.g. p! too large)."""


class SimulationError(CamError):
    """Raised when a Gaussian-process draw cannot be factorized."""


class StageError(CamError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
