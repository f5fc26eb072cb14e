"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration errors exit
with 2, capacity errors with 3, and convergence failures (strict solver
mode only) with 4.
"""


class StegoError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(StegoError):
    """A config field or argument is out of its documented range."""


class CapacityError(StegoError):
    """The message does not fit the latent shape at the given block size."""


class ConvergenceError(StegoError):
    """A fixed-point iteration exhausted max_iters in strict mode.

    Carries the last residual so callers can decide whether the partial
    result is still usable.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DivergenceError(StegoError):
    """A solver or optimizer produced non-finite values."""
