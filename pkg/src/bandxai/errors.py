"""Exception types. The CLI maps each one to a distinct exit code."""


class ConfigError(ValueError):
    """Invalid configuration or argument values."""


class DataError(ValueError):
    """Malformed, missing, or inconsistent input data."""


class NumericalError(ArithmeticError):
    """Non-finite values or a degenerate computation."""
