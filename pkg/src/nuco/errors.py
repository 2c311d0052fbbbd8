"""Exception types shared across the toolkit."""

from __future__ import annotations


class NucoError(Exception):
    """Base class for every error raised by this package."""


class ExprSyntaxError(NucoError, ValueError):
    """Malformed expression text. ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifier(ExprSyntaxError):
    """An identifier other than ``t`` or a supported function name."""


class EvalError(NucoError, ArithmeticError):
    """An expression could not be evaluated to a finite real.

    ``index`` is the row-major entry index when raised from a matrix
    evaluation, otherwise ``None``.
    """

    def __init__(self, cause: str, index: int | None = None, t: float | None = None):
        self.cause = cause
        self.index = index
        self.t = t
        where = "" if index is None else f" in entry {index}"
        at = "" if t is None else f" at t={t!r}"
        super().__init__(f"{cause}{where}{at}")


class DimensionMismatch(NucoError, ValueError):
    pass


class IntegrationFailure(NucoError, RuntimeError):
    """The ODE solver could not advance. ``time`` is where it stopped."""

    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(f"{message} (t={time!r})")


class NonFiniteDerivative(NucoError, ArithmeticError):
    pass


class InfeasibleFit(NucoError):
    pass


class DegenerateGrid(NucoError, ValueError):
    pass


class HypothesisUnmet(NucoError):
    """A hypothesis of an estimate does not hold for the fitted constants."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        self.detail = detail
        super().__init__(f"hypothesis {condition} not satisfied" + (f": {detail}" if detail else ""))


class VerificationFailure(NucoError):
    """A sampled inequality failed to hold on the grid."""


class NotObservableOnGrid(VerificationFailure):
    def __init__(self, t: float, detail: str = ""):
        self.t = t
        super().__init__(f"observability Gramian is not positive definite for any grid sigma at t={t!r}"
                         + (f" ({detail})" if detail else ""))


class NotControllableOnGrid(VerificationFailure):
    def __init__(self, t: float, detail: str = ""):
        self.t = t
        super().__init__(f"controllability Gramians are not positive definite for any grid sigma at t={t!r}"
                         + (f" ({detail})" if detail else ""))
