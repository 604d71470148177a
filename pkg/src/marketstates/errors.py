"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class MarketStatesError(Exception):
    """Base class for all package errors."""


class ConfigError(MarketStatesError):
    """Invalid run configuration or CLI arguments."""


class DataError(MarketStatesError):
    """Missing, malformed, or inconsistent input data."""


class NumericError(MarketStatesError):
    """Numerical failure (decomposition breakdown, non-finite input, ...)."""
