"""Exception hierarchy shared by every subsystem."""


class StereoError(Exception):
    """Base class for all package errors."""


class DimensionError(StereoError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class NumericError(StereoError, FloatingPointError):
    """An operation produced NaN or Inf from finite inputs."""


class InputError(StereoError, ValueError):
    """Caller-supplied data violates an operation's precondition."""


class UsageError(StereoError, RuntimeError):
    """An API was invoked in an unsupported way."""


class ConfigError(StereoError, ValueError):
    """A configuration value is missing, unknown or inconsistent."""


class ResourceError(StereoError, MemoryError):
    """A computation would exceed its configured memory budget."""


class GenerationError(StereoError, RuntimeError):
    """Scene generation could not satisfy its constraints."""


class DivergenceError(StereoError, RuntimeError):
    """Training produced a non-finite loss."""
