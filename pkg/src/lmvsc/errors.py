"""Exception types raised across the package."""


class LmvscError(Exception):
    """Base class for package errors."""


class ParseError(LmvscError, ValueError):
    """A data file could not be parsed."""


class DimensionMismatch(LmvscError, ValueError):
    """Array shapes disagree."""


class LengthMismatch(DimensionMismatch):
    """Two label vectors have different lengths."""


class ConvergenceError(LmvscError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    Attributes
    ----------
    residual : float
        Final KKT residual of the offending problem.
    index : int or None
        Sample index, when raised from a batch solve.
    """

    def __init__(self, message, residual=float("nan"), index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class RankDeficient(LmvscError, ValueError):
    """Fewer than ``k`` numerically nonzero singular values."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateGraph(LmvscError, ValueError):
    """Every anchor in a graph has zero degree."""


class SizeGuard(LmvscError, ValueError):
    """A dense oracle was called on a problem too large for it."""
