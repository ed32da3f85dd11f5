"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (config=2, data=3, numeric=4).
"""


class ConfigError(ValueError):
    """Invalid or unparseable pipeline configuration."""


class DataError(ValueError):
    """Malformed input data or a dataset that violates a precondition."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""
