"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class SpectralCltError(Exception):
    """Base class for all package errors."""


class ValidationError(SpectralCltError, ValueError):
    """Invalid model parameters, function specs, or inputs."""


class NumericalError(SpectralCltError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class QveConvergenceError(NumericalError):
    """The quadratic vector equation solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContourTooCloseError(NumericalError):
    """A kernel linear system is near-singular on the requested contour."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class QuadratureError(NumericalError):
    """Contour quadrature failed its reality or convergence checks."""
