"""Exception types shared across the package."""


class NniregError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(NniregError, ValueError):
    """Operands have incompatible shapes (contract violation)."""


class InvariantViolationError(NniregError, ValueError):
    """A declared invariant does not hold (e.g. G not positive definite)."""


class UnsupportedConfigurationError(NniregError, ValueError):
    """A combination of inputs is outside the supported configurations."""


class ConvergenceFailureError(NniregError, RuntimeError):
    """An iterative computation did not converge within its budget.

    Carries the last estimate so callers can inspect how far it got.
    """

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class InfiniteIndexError(NniregError, ValueError):
    """An a-priori stopping index is undefined (zero total noise)."""


class DegenerateModelError(NniregError, ValueError):
    """A forward model degenerates (e.g. identically zero kernel)."""


class ConfigError(NniregError, ValueError):
    """An experiment configuration is invalid."""
