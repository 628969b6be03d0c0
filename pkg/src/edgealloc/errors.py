"""Exception classes shared across the package.

The CLI maps these onto distinct exit codes (config: 2, data: 3,
anything else: 4), so raise the most specific class that applies.
"""


class ConfigError(ValueError):
    """A configuration file or option is invalid or unusable."""


class DataError(ValueError):
    """Input data cannot be used: bad trace file, degenerate training set, ..."""
