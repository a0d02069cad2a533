"""Exception hierarchy shared by every module."""


class LabError(Exception):
    """Base class for errors raised by contraction_lab."""


class DomainError(LabError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(LabError, ValueError):
    """A documented precondition (moment condition, support, ...) is violated."""


class TruncationError(LabError, ValueError):
    """A truncated sequence leaves too much mass in its tail."""


class OutsideRKHSError(LabError, ValueError):
    """A vector is (numerically) outside the span of the retained eigenvectors."""


class RangeError(LabError, ValueError):
    """A requested value is outside the range covered by a tabulated profile."""


class NumericError(LabError, ArithmeticError):
    """An iterative or quadrature routine failed to converge.

    ``diagnostics`` carries whatever the failing routine knew at the time.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class UnderflowError(NumericError):
    """A probability is too small for the requested estimator."""
