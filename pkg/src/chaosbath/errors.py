"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems (including
input validation) exit 1, numerical failures exit 2, capacity limits
exit 3.
"""


class ChaosbathError(Exception):
    """Base class for all package errors."""


class ConfigError(ChaosbathError):
    """Invalid configuration or experiment specification."""


class ValidationError(ConfigError):
    """An input value violates a documented precondition."""


class NumericError(ChaosbathError):
    """A numerical procedure failed (non-convergence, step underflow, ...)."""


class UnfoldingError(NumericError):
    """Spectral unfolding produced a non-monotone smooth staircase."""


class CapacityError(ChaosbathError):
    """Requested problem size exceeds the configured dense-matrix cap."""
