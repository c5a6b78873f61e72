"""Exception hierarchy shared across the package."""


class NetinferError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(NetinferError, ValueError):
    """A hyperparameter lies outside its legal (open) domain."""


class UsageError(NetinferError, ValueError):
    """A function was called with inconsistent or unsupported arguments."""


class DataTooShortError(UsageError):
    """A time series is too short for the requested truncation length."""


class NumericalError(NetinferError, ArithmeticError):
    """A factorization failed even after the jitter retry.

    Carries enough context (``detail``) to identify the offending
    structure / hyperparameters.
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class UniverseMismatchError(NetinferError, ValueError):
    """Results and ground truth describe different node/input sets."""
