"""Exception hierarchy shared by every module."""


class ConeTestError(Exception):
    """Base class for all errors raised by conetest."""


class DomainError(ConeTestError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConditioningError(ConeTestError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class NotPositiveDefiniteError(ConditioningError):
    """Cholesky factorization hit a pivot at or below tolerance."""

    def __init__(self, pivot_index, pivot, message=None):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(
            message
            or f"matrix is not positive definite: pivot {pivot_index} = {pivot:.3e}"
        )


class SolverError(ConeTestError, RuntimeError):
    """An iterative solver failed to converge or to certify its answer."""


class NumericalError(ConeTestError, RuntimeError):
    """Quadrature or root finding could not meet its tolerance."""
