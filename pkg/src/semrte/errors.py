"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1 (usage),
DataError -> 2 (bad input data), InternalError -> 3.
"""


class SemrteError(Exception):
    pass


class DataError(SemrteError):
    """Input data (corpus file, prediction file, checkpoint) is malformed."""


class ConfigError(SemrteError):
    """A configuration value or combination is invalid."""


class InternalError(SemrteError):
    """An internal invariant was violated; indicates a bug, not bad input."""
