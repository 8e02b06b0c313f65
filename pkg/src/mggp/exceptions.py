"""Exception types shared across the package."""


class MggpError(Exception):
    """Base class for all package-specific errors."""


class InputValidationError(MggpError, ValueError):
    """Invalid argument values, shapes, or labels."""


class UnsupportedMetricError(InputValidationError):
    """Operation is only defined for a specific metric (e.g. the discrete one)."""


class UnsupportedParameterError(InputValidationError):
    """Hyperparameter name unknown or value outside the supported envelope."""


class InvalidDensityError(InputValidationError):
    """A spectral density evaluated to a negative value."""


class NotPositiveDefiniteError(MggpError):
    """Cholesky factorization failed at every jitter level.

    Carries the ladder of jitter values that were attempted.
    """

    def __init__(self, message, ladder=()):
        super().__init__(message)
        self.ladder = tuple(ladder)


class DesignSingularError(MggpError):
    """F' Sigma^-1 F is singular; profiled coefficients are not identifiable."""


class FitFailedError(MggpError):
    """Every optimizer restart failed."""


class GenerationError(MggpError):
    """Synthetic data generation failed (e.g. the target Gram would not factor)."""


class ConfigError(MggpError):
    """Malformed or inconsistent configuration input."""
