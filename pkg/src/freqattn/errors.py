"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates a structural constraint."""


class CapacityError(ValueError):
    """More items were requested than the container can hold."""


class FormatError(ValueError):
    """A file does not conform to its expected binary/text layout."""


class ParseError(ValueError):
    """A text input could not be parsed; message carries the line number."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""
