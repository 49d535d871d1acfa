"""Exception hierarchy shared by every module of the package."""


class DiscountError(ValueError):
    """Base class for all package errors."""


class InvalidParamsError(DiscountError):
    pass


class NonFiniteError(DiscountError):
    pass


class InvalidTimePointError(DiscountError):
    pass


class OrderViolationError(DiscountError):
    pass


class DegenerateDerivativeError(DiscountError):
    pass


class EmptyGridError(DiscountError):
    pass


class BracketFailureError(DiscountError):
    pass


class EmptyDataError(DiscountError):
    pass


class NoDominanceItemError(DiscountError):
    pass


class MissingProfileError(DiscountError):
    pass


class RankDeficientCovariatesError(DiscountError):
    pass


class LengthMismatchError(DiscountError):
    pass


class DegenerateConstantVectorError(DiscountError):
    pass


class OutOfRangeError(DiscountError):
    pass


class InsufficientDataError(DiscountError):
    pass
