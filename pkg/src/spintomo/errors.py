"""Exception hierarchy.

Errors fall into two families so the command line can map them onto exit
codes: :class:`ValidationError` for bad input (exit 1) and
:class:`NumericalError` for numerically degenerate situations (exit 2).
"""


class SpinTomoError(Exception):
    """Base class for all package errors."""


class ValidationError(SpinTomoError, ValueError):
    pass


class NumericalError(SpinTomoError, ArithmeticError):
    pass


class InvalidSpin(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OrderOutOfRange(ValidationError):
    pass


class InsufficientDirections(ValidationError):
    pass


class InsufficientSettings(ValidationError):
    pass


class IncompleteRecord(ValidationError):
    pass


class WrongDirections(ValidationError):
    pass


class EigenvalueMismatch(NumericalError):
    """Eigenvalues of an operator are not the spin values -l..l."""


class NonPhysicalState(NumericalError):
    pass


class IllConditioned(NumericalError):
    """The design matrix is rank deficient or too badly conditioned."""


class StepTooLarge(NumericalError):
    pass


class BasisConstructionError(NumericalError):
    """Internal failure while orthogonalising the operator basis."""
