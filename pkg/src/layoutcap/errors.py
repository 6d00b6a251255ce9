"""Exception types shared across the package."""


class LayoutcapError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(LayoutcapError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class StateError(LayoutcapError, RuntimeError):
    """Operation called in an invalid order (e.g. backward twice)."""


class NumericError(LayoutcapError, ArithmeticError):
    """A computation produced or received non-finite values."""


class ConfigError(LayoutcapError, ValueError):
    """Invalid configuration (bad fractions, empty corpus, ...)."""


class ParseError(LayoutcapError, ValueError):
    """Input file violates the documented schema."""


class InvalidBoxError(LayoutcapError, ValueError):
    """Bounding box is degenerate or out of range."""


class EmptyLayoutError(LayoutcapError, ValueError):
    """An object layout with no entries was given to the encoder."""


class CaptionFormatError(LayoutcapError, ValueError):
    """A token sequence is not a well-formed BOS...EOS caption."""
