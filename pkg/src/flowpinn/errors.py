"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called outside its documented contract."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class TrainingError(RuntimeError):
    """A training loop hit a non-recoverable numeric failure."""
