"""Exception types shared across the package.

The CLI maps these onto exit codes: InputDataError -> 1, ConfigError -> 2.
"""


class MmevLabError(Exception):
    """Base class for all mmev-lab errors."""


class InputDataError(MmevLabError):
    """A data file or stream could not be used (unreadable, empty where
    content is required, or fatally malformed)."""


class ConfigError(MmevLabError):
    """A configuration file, scenario file, or parameter set is invalid."""
