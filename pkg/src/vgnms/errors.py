"""Exception hierarchy shared by the library and the CLI.

The CLI maps ConfigError to exit code 2 (usage/config) and every other
ToolkitError to exit code 1 (runtime failure).
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolkitError):
    """Invalid configuration value or incompatible configuration objects."""


class DataError(ToolkitError):
    """Malformed or inconsistent input data (files, records, tables)."""


class GenerationError(ToolkitError):
    """Synthetic scene generation could not satisfy its constraints."""
