"""Exception hierarchy shared by every discofit module."""


class DiscofitError(Exception):
    """Base class for all errors raised by discofit."""


# kernels
class ZeroAtOrigin(DiscofitError, ValueError):
    pass


class NonFinite(DiscofitError, ValueError):
    pass


# numerics
class NoConvergenceWarning(RuntimeWarning):
    """Quadrature refinement hit its limit before meeting ``rel_tol``."""


class LengthMismatch(DiscofitError, ValueError):
    pass


class EmptyInput(DiscofitError, ValueError):
    pass


class InvalidBaseline(DiscofitError, ZeroDivisionError):
    pass


# detect
class TooFewPoints(DiscofitError, ValueError):
    pass


class DuplicateInputs(DiscofitError, ValueError):
    pass


class NotAJump(DiscofitError):
    pass


# smooth
class SingularNormalEquations(DiscofitError, ArithmeticError):
    pass


class NonFiniteLoss(DiscofitError, ArithmeticError):
    pass


class GridTooLarge(DiscofitError, ValueError):
    pass


class IllConditioned(DiscofitError, ArithmeticError):
    def __init__(self, condition, ridge):
        self.condition = condition
        self.ridge = ridge
        super().__init__(
            f"least-squares system condition estimate {condition:.3e} exceeds 1e12 "
            f"(ridge used: {ridge!r})"
        )


class DimensionMismatch(DiscofitError, ValueError):
    pass


# singular
class NonConformingKernel(DiscofitError, ValueError):
    pass


class CoincidentCenters(DiscofitError, ValueError):
    pass


class BudgetUnreachable(DiscofitError, ArithmeticError):
    pass


# hybrid / io
class UnsupportedVersion(DiscofitError, ValueError):
    pass


class CorruptFile(DiscofitError, ValueError):
    pass


# bench
class SpikeOffGrid(DiscofitError, ValueError):
    pass
