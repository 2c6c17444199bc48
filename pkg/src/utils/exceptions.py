"""
Typed error hierarchy shared by the kernel, network, bounds and search layers
"""

from typing import Optional


class NTKError(Exception):
    """Base class for all toolkit errors"""
    pass


class ValidationError(NTKError):
    """Input errors: shapes, lengths, unnormalised rows, unreadable files"""
    pass


class DomainError(NTKError):
    """Arguments outside the mathematical domain of an operation"""
    pass


class NumericalError(NTKError):
    """Numerical repair failed (e.g. a Gram matrix too far from PSD)"""
    pass


class MarginTooLargeError(DomainError):
    """Rejection sampling could not produce enough points outside the margin band"""
    pass


class DivergenceError(NTKError):
    """
    Training produced a non-finite or exploding output

    Attributes:
        iteration: 1-based SGD step at which divergence was detected
    """

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class SearchError(NTKError):
    """Every shortlisted candidate failed during a search run"""
    pass
