"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad step count, zero learning rate, ...)."""


class DataError(ValueError):
    """Malformed or insufficient input data."""


class ContractError(ValueError):
    """An operation was called outside its supported contract."""


class NumericalError(RuntimeError):
    """A linear solve or factorization failed beyond recoverable ridge fallbacks."""
