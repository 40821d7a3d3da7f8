"""Exception types shared across the package."""


class LatentGraphError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LatentGraphError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(LatentGraphError, ValueError):
    """An operation was called outside its documented preconditions."""


class NumericalError(LatentGraphError, ArithmeticError):
    """A computation produced values outside its numeric contract."""


class ParseError(LatentGraphError, ValueError):
    """A file could not be parsed; the message carries row/column context."""


class DataError(LatentGraphError, ValueError):
    """Input data violates a documented domain constraint."""
