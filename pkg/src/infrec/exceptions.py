class InfrecError(Exception):
    """Base class for package errors."""


class ShapeError(InfrecError, ValueError):
    """Array shapes do not conform to the model dimensions."""


class DataError(InfrecError, ValueError):
    """Input data violates a schema or model invariant."""


class NumericalError(InfrecError, ArithmeticError):
    """An objective or gradient could not be evaluated (e.g. an impossible event)."""
