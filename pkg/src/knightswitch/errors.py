"""Exception hierarchy.

Every error carries a short machine-readable ``code`` (the class name by
default) so the command line can print ``ERROR <code>: <message>``.
"""

from __future__ import annotations


class SwitchingError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# expression language -------------------------------------------------------

class ExprError(SwitchingError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EmptyInput(ParseError):
    pass


class UnbalancedParenthesis(ParseError):
    pass


class UnknownIdentifier(ParseError):
    pass


class UnexpectedToken(ParseError):
    pass


class EvalError(ExprError):
    """Evaluation failure; ``subtree`` is the offending expression node."""

    def __init__(self, message: str, subtree=None):
        super().__init__(message)
        self.subtree = subtree


class DivisionByZero(EvalError):
    pass


class LogOfNonPositive(EvalError):
    pass


class NonFiniteResult(EvalError):
    pass


# problem definition ----------------------------------------------------------

class FormatError(SwitchingError):
    pass


class RangeError(SwitchingError):
    pass


class SpecRejected(SwitchingError):
    """Raised when a numerical routine is handed a spec that fails validation."""

    def __init__(self, report):
        codes = sorted({f.code for f in report.errors})
        super().__init__("specification rejected: " + ", ".join(codes))
        self.report = report


# numerics ------------------------------------------------------------------

class NumericError(SwitchingError):
    pass


class DriftOutOfSet(NumericError):
    pass


class BadStepCount(NumericError):
    pass


class StepTooCoarse(NumericError):
    pass


class ReflectionDiverged(NumericError):
    pass


class NoConvergence(NumericError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class InstantaneousCycle(NumericError):
    pass


class SearchSpaceTooLarge(NumericError):
    pass


class InvalidControlGrid(NumericError):
    pass
