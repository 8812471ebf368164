"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Mismatched dimensions, windows, or invalid configuration values."""


class ContractError(ValueError):
    """A call violated an operation precondition (bad cell, bad shape)."""


class DataFormatError(Exception):
    """A file could not be parsed: bad magic, truncation, version mismatch."""
