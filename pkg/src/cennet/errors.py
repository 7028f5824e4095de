"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CennetError(Exception):
    """Base class for all package errors."""


class DataError(CennetError, ValueError):
    """Malformed or unusable input data (exit code 2 on the CLI)."""


class BnParseError(DataError):
    """Syntax or semantic error in a Bayesian-network model file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class DegenerateTargetError(DataError):
    """Target column contains a single class."""


class NumericError(CennetError, ArithmeticError):
    """Numerical failure (exit code 3 on the CLI)."""


class TrainingDivergedError(NumericError):
    pass


class UndefinedProbabilityError(NumericError):
    """A probability needed for a log-ratio is zero and smoothing is disabled."""
