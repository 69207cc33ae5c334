"""Exception and warning types shared across the package."""


class StressformerError(Exception):
    """Base class for all package errors."""


class ShapeError(StressformerError):
    """Array dimensions incompatible with the requested operation."""


class ConfigError(StressformerError):
    """Invalid configuration value or combination."""


class ValidationError(StressformerError):
    """Input data violates a documented precondition."""


class UsageError(StressformerError):
    """API called outside its contract (e.g. backward on a non-scalar)."""


class NumericsError(StressformerError):
    """Numerical failure such as a NaN loss during training."""


class DataWarning(UserWarning):
    """Non-fatal data-quality issue (empty windowing, zero std, class coverage)."""
