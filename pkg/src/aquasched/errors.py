"""Exception types shared across the package."""


class AquaschedError(Exception):
    """Base class for all package errors."""


class InputError(AquaschedError):
    """Bad operation input (non-finite values, empty chunks, length mismatch...)."""


class ConfigError(AquaschedError):
    """Invalid configuration (disconnected topology, bad parameter ranges...)."""


class UndefinedCorrelationError(InputError):
    """Pearson coefficient undefined (constant vector); callers treat as no link."""
