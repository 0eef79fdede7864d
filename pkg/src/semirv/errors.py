"""Exception hierarchy shared by every module."""


class SemiRVError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpecError(SemiRVError, ValueError):
    """A tail-function specification has bad or non-finite parameters."""


class DomainError(SemiRVError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class OneSidedDerivativeError(DomainError):
    """Derivative requested at a breakpoint of a piecewise family."""

    def __init__(self, x, left, right):
        super().__init__(f"f is not differentiable at breakpoint x={x!r} "
                         f"(left derivative {left!r}, right derivative {right!r})")
        self.x = x
        self.left = left
        self.right = right


class AccuracyError(SemiRVError, ArithmeticError):
    """A numerical method could not reach its requested accuracy."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class QuadratureError(AccuracyError):
    """Adaptive quadrature failed to converge."""


class InvalidConstructionError(SemiRVError, ValueError):
    """A distribution cannot be built from the requested (alpha, f) pair."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class UsageError(SemiRVError, TypeError):
    """Operation called on the wrong kind of object (e.g. pmf of a continuous law)."""


class UnsupportedCaseError(SemiRVError, ValueError):
    """Inputs fall outside every case a predictor covers."""


class WrongCaseError(UnsupportedCaseError):
    """Declared indices do not match the requested closed-form case."""
