"""Exception types shared across the package."""


class CoopTrackError(Exception):
    """Base class for all package errors."""


class InvalidStateError(CoopTrackError):
    """A filter state contains non-finite or otherwise unusable values."""


class NumericalError(CoopTrackError):
    """A filter operation failed numerically (indefinite covariance,
    non-invertible innovation covariance)."""


class ConfigError(CoopTrackError):
    """Bad value or unknown key in a configuration."""


class DataError(CoopTrackError):
    """Malformed or inconsistent input data."""


class UndefinedMetricError(CoopTrackError):
    """A metric is undefined for the given frames (empty denominator)."""
