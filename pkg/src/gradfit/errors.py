"""Exception hierarchy shared by all gradfit modules."""


class GradfitError(Exception):
    """Base class for every error raised by gradfit."""


class ParameterError(GradfitError, ValueError):
    """Invalid argument value or inconsistent dimensions."""


class DegeneracyError(GradfitError, ArithmeticError):
    """A matrix or data set is too degenerate to proceed."""


class ConvergenceError(GradfitError, RuntimeError):
    """An iterative procedure hit its iteration cap."""


class FactorizationError(GradfitError, ArithmeticError):
    """A sparse LU factorization failed (singular matrix)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ContractError(GradfitError):
    """An operation was called on an object that does not satisfy its precondition."""


class EvaluationError(GradfitError):
    """A user-supplied evaluator or an expression failed at a specific input."""

    def __init__(self, message, point=None, node=None):
        super().__init__(message)
        self.point = point
        self.node = node


class ExprSyntaxError(GradfitError, ValueError):
    """Malformed expression text; ``position`` is the 0-based character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class TruncationError(GradfitError, ValueError):
    """Requested expansion order exceeds what the correlation matrix supports."""
