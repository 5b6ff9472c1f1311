"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid parameters or an inconsistent configuration."""


class FormatError(ValueError):
    """A file exists but its content cannot be decoded."""
