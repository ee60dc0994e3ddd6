"""Exception hierarchy shared by every module of the package."""


class CircWassError(Exception):
    """Base class for all errors raised by circwass."""


class ValidationError(CircWassError, ValueError):
    """Bad input supplied by the caller."""


class EmptyInput(ValidationError):
    pass


class NegativeMass(ValidationError):
    pass


class ZeroTotal(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class BadParameter(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class MissingClass(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class AsymmetricInput(ValidationError):
    pass


class NonConvexSpec(ValidationError):
    pass


class NumericalError(CircWassError, ArithmeticError):
    """A solver or training loop produced an unusable numerical result."""


class InfeasibleMarginals(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message: str, violation: float):
        super().__init__(message)
        self.violation = violation


class DivergedLoss(NumericalError):
    pass
