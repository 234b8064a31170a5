"""Shared exception types."""


class ConfigError(Exception):
    """Invalid configuration: bad value, unknown name, or violated invariant."""


class SchemaError(ConfigError):
    """A document does not match its declared schema."""


class ReplayMismatch(Exception):
    """A re-simulated episode diverged from its log."""
