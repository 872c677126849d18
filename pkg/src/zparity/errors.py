"""Exception types shared across the package."""


class ZparityError(Exception):
    """Base class for all package errors."""


class ConfigError(ZparityError):
    """Raised when a configuration file is unreadable or violates a parameter invariant."""


class InvariantError(ZparityError):
    """Raised when a numerical invariant fails (non-unit trace, broken completeness, ...)."""
