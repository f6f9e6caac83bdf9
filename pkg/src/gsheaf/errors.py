"""Exception types raised across the package."""


class GSheafError(Exception):
    """Base class for all package errors."""


class ParameterError(GSheafError, ValueError):
    """Invalid parameter value (counts, probabilities, ratios...)."""


class ShapeError(GSheafError, ValueError):
    """Array dimensions do not match the expected layout."""


class SingularityError(GSheafError, ArithmeticError):
    """A matrix that must be invertible is (numerically) singular."""


class DegeneracyError(GSheafError, ValueError):
    """Graph structure makes an operator ill-defined (e.g. isolated node)."""


class PathError(GSheafError, ValueError):
    """A node sequence is not a walk in the graph."""


class NumericError(GSheafError, ArithmeticError):
    """Non-finite values encountered in a numerical routine."""


class FactorizationError(NumericError):
    """Cholesky factorization failed even after jitter."""


class SchemaError(GSheafError, ValueError):
    """Input file is missing a declared column."""
