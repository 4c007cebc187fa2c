"""Exception types shared across the package."""


class SetransError(ValueError):
    """Base class for all errors raised by this package."""


class ShapeError(SetransError):
    """A tensor or feature does not have the shape its contract requires."""


class InputError(SetransError):
    """Input values violate an operation's precondition."""


class ConfigError(SetransError):
    """A configuration is internally inconsistent."""


class FormatError(SetransError):
    """An on-disk file (wav, manifest, matrix dump) is malformed."""


class CorruptionError(FormatError):
    """A checkpoint failed validation; no partial model is returned."""
