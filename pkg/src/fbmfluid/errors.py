"""Exception hierarchy shared by every module."""


class FbmFluidError(Exception):
    """Base class for all package errors."""


class DomainError(FbmFluidError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConfigurationError(FbmFluidError, ValueError):
    """A run or object configuration violates a precondition."""


class NumericalError(FbmFluidError, ArithmeticError):
    """A numerical procedure failed to meet its accuracy or stability target."""


class QuadratureError(NumericalError):
    """Estimated quadrature error exceeded the requested tolerance."""

    def __init__(self, message, estimate=None, error=None, tolerance=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.tolerance = tolerance


class EmbeddingError(NumericalError):
    """Circulant embedding produced a negative eigenvalue."""


class FactorizationError(NumericalError):
    """A covariance matrix could not be factorized."""


class DivergenceError(NumericalError):
    """An iteration or time stepper diverged."""

    def __init__(self, message, history=None, context=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
        self.context = dict(context) if context is not None else {}
