"""Exception hierarchy shared by every module."""


class SymspaceError(ValueError):
    """Base class for all errors raised by :mod:`symspace`."""


class NotPositiveDefiniteError(SymspaceError):
    """A matrix required to be positive definite is not."""


class ConvergenceError(SymspaceError):
    """An iterative routine did not converge."""


class TangentTooLargeError(SymspaceError):
    """A tangent vector is too large for the exponential map to be representable."""


class ChartError(SymspaceError):
    """A point lies outside the chart-validity region of its manifold."""


class UnsupportedError(SymspaceError):
    """The requested operation is not available for this manifold."""


class QuadratureError(SymspaceError):
    """A quadrature rule is too coarse for the requested accuracy."""


class DataFormatError(SymspaceError):
    """Malformed input file or inconsistent data."""
