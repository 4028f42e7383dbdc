"""Exception hierarchy."""


class FmouError(Exception):
    """Base class for all package errors."""


class DataError(FmouError, ValueError):
    """Input data is malformed (non-finite values, bad parse, wrong shape)."""


class ContractError(FmouError, ValueError):
    """A precondition of an operation was violated by the caller."""


class DegenerateFilterError(FmouError, ArithmeticError):
    """A Kalman step hit a predictive variance below the numerical floor."""

    def __init__(self, message, factor=None, time=None):
        super().__init__(message)
        self.factor = factor
        self.time = time


class RankError(FmouError, ValueError):
    """Requested rank exceeds the numerical rank of the input."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class AmbiguityError(FmouError, ArithmeticError):
    """The orthogonal Procrustes optimum is not unique."""

    def __init__(self, message, rank):
        super().__init__(message)
        self.rank = rank


class ConsistencyError(FmouError, ArithmeticError):
    """An internal quantity that must be non-negative came out negative."""


class UniquenessError(FmouError, ArithmeticError):
    """The correlation cubic did not have exactly one root in (-1, 1)."""

    def __init__(self, message, roots):
        super().__init__(message)
        self.roots = tuple(roots)


class SelectionError(FmouError):
    """Every candidate number of factors failed to fit."""
