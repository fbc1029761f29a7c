class VarsurvError(Exception):
    """Base class for package errors."""


class ConfigError(VarsurvError):
    """Invalid configuration or column roles."""


class DataError(VarsurvError):
    """Malformed or out-of-domain input data."""


class NumericalError(VarsurvError):
    """Non-finite values encountered during fitting or evaluation."""
