"""Exception hierarchy shared by every gtwidl module."""


class GTWIDLError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(GTWIDLError, ValueError):
    """An argument violates a documented precondition (shapes, ranges)."""


class ConfigurationError(InvalidArgumentError):
    """An option combination cannot be honoured (e.g. basis lacks a linear column)."""


class DegenerateWarpError(InvalidArgumentError):
    """A warping path collapses to (almost) a single dictionary frame."""


class NumericalFailureError(GTWIDLError, ArithmeticError):
    """Non-finite values appeared inside an iterative solver."""


class QPInfeasibleError(NumericalFailureError):
    """The quadratic subproblem has an empty feasible region."""


class QPNonConvergenceError(NumericalFailureError):
    """The active-set loop hit its iteration cap."""


class ParseError(GTWIDLError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)
        self.line = line
        self.column = column


class SchemaError(ParseError):
    """A structured record does not match the expected schema."""
