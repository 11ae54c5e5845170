"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or parameter shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value violates its constraints."""


class SchemaError(ValueError):
    """An input file is missing a required column or field."""


class CheckpointError(RuntimeError):
    """A checkpoint file is corrupt, truncated, or fails verification."""
