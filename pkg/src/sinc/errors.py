"""Exception and warning types raised across the package."""


class SincError(Exception):
    """Base class for all recoverable package errors."""


class ValidationError(SincError, ValueError):
    """Input data rejected before fitting."""


class DimensionMismatch(ValidationError):
    pass


class DegenerateColumn(ValidationError):
    """An all-zero count column or a constant covariate column."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class NonFiniteEntry(ValidationError):
    pass


class NonFiniteResult(SincError, FloatingPointError):
    """A likelihood or ELBO evaluation overflowed; the optimisation diverged."""


class SingularBlock(SincError, ArithmeticError):
    """The linear system of a precision-column update could not be solved."""


class UniverseMismatch(SincError, ValueError):
    """Estimated and true selections are indexed over different sets."""


class ParseError(SincError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.column = column


class NegativeCount(ParseError):
    pass


class RaggedRows(ParseError):
    pass


class SincWarning(UserWarning):
    pass


class NonConvergenceWarning(SincWarning):
    pass


class LineSearchWarning(SincWarning):
    """L-BFGS could not find a descent step for some latent rows."""


class DegenerateDenominator(SincWarning):
    """The closed-form scale update had a non-positive denominator; value kept."""


class InvariantViolation(AssertionError):
    """A state object broke a structural invariant. Indicates a bug, not bad input."""
