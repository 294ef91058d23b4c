"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, ranges or configuration keys."""


class ShapeError(ValueError):
    """Fields that do not live on the same grid."""


class CoercivityError(ValueError):
    """Diffusion coefficient that is not bounded away from zero."""


class SolverError(RuntimeError):
    """A linear solve that failed or missed its residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class HypothesisViolation(ValueError):
    """Parameters outside the range where the convergence bound applies."""
