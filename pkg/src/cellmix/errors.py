"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigurationError(ValueError):
    """A parameter or config value is outside its permitted range."""


class UsageError(ValueError):
    """An API was called in a way its contract forbids."""


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared in a forward value or a gradient."""


class DataFormatError(ValueError):
    """A corpus file (CSV row, PNG channel, ...) violates the expected layout."""


class GenerationError(RuntimeError):
    """Sampling from a model failed (e.g. non-finite weights)."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible with the model."""
