"""Exception types shared across the package.

Every user-facing failure mode has its own class so the CLI can map it to a
distinct exit code.
"""


class PhpdeError(Exception):
    """Base class for all package errors."""


class GridError(PhpdeError):
    """Invalid periodic grid (too few points, nonpositive period, ...)."""


class KernelError(PhpdeError):
    """Invalid convolution kernel or kernel/grid mismatch."""


class ShapeError(PhpdeError):
    """Array shapes inconsistent with the operation's contract."""


class SingularOperatorError(PhpdeError):
    """A circulant operator was (numerically) singular.

    Carries the name of the offending kernel when known.
    """

    def __init__(self, message, kernel_name=None):
        super().__init__(message)
        self.kernel_name = kernel_name


class NonconvergenceError(PhpdeError):
    """Implicit solve failed to reach tolerance within max_iter."""

    def __init__(self, message, residual_norm=None, step_index=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.step_index = step_index


class ConfigError(PhpdeError):
    """Bad run configuration (unknown system/preset, invalid value, ...)."""


class UsageError(PhpdeError):
    """API called out of order (e.g. ablation before leakage correction)."""


class UnsupportedModelError(PhpdeError):
    """Operation not defined for this model kind (e.g. regridding a baseline)."""
