#!/usr/bin/env python3
"""
Exception hierarchy for the pair-invariants toolkit.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class PairToolError(ValueError):
    """Base class for all toolkit errors."""

    exit_code = 1


class ExpressionSyntaxError(PairToolError):
    """Malformed coefficient expression."""

    exit_code = 2

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ProblemFileError(PairToolError):
    """Problem file failed schema or range validation."""

    exit_code = 2


class UnboundVariable(PairToolError):
    exit_code = 2


class FunctionNeedsFloatMode(PairToolError):
    exit_code = 2


class DecimalInRationalMode(PairToolError):
    exit_code = 2


class DivisionAtPole(PairToolError):
    exit_code = 2


class ChartMismatch(PairToolError):
    """Operands live on different charts or in different scalar modes."""


class NotInvertible(PairToolError):
    """Jet with vanishing constant term was inverted."""

    exit_code = 3


class OrderExhausted(PairToolError):
    """A derivative was requested from a jet with no order left."""

    exit_code = 4

    def __init__(self, message: str, audit: Optional[list] = None):
        super().__init__(message)
        self.audit = audit or []


class SingularLeadingMatrix(PairToolError):
    """Constant-term matrix of a jet system is singular at the point."""

    exit_code = 3


class RegularityFailure(PairToolError):
    exit_code = 3

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report


class DegeneratePair(PairToolError):
    """Line field vanishes at the point."""

    exit_code = 3


class TransversalError(PairToolError):
    exit_code = 3


class GatingViolation(PairToolError):
    exit_code = 5
