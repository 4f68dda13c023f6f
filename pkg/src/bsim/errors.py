"""Exception types shared across the package."""


class BsimError(Exception):
    """Base class for package errors."""


class DomainError(BsimError, ValueError):
    """A value lies outside the mean domain or support of a family."""


class DataError(BsimError, ValueError):
    """Input data failed validation (missing columns, bad arm codes, ...)."""


class NumericalError(BsimError, ArithmeticError):
    """A linear-algebra or fitting step failed after all safeguards."""
