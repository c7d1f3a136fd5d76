"""Exception types shared across the package."""


class Text2KGError(Exception):
    """Base class for all package errors."""


class DataError(Text2KGError):
    """Malformed or inconsistent input data (files, records, graphs)."""


class CapacityError(DataError):
    """Input exceeds a fixed structural capacity (node slots, label length)."""


class ShapeError(Text2KGError):
    """Tensor shape mismatch in an operator."""


class NumericalFault(Text2KGError):
    """NaN or Inf detected where finite values are required."""
