"""Exception hierarchy shared by all cavitiga modules."""


class CavitigaError(Exception):
    """Base class for all package errors."""


class ConfigError(CavitigaError):
    """Invalid run configuration or geometry file."""


class RefinementError(CavitigaError):
    """Knot insertion would exceed the admissible multiplicity."""


class GeometryError(CavitigaError):
    """Invalid or degenerate geometry construction."""


class NonconformingGeometryError(CavitigaError):
    """Patch faces overlap partially instead of matching fully."""


class EvaluationError(CavitigaError):
    """Field evaluation failed (e.g. singular geometry Jacobian)."""


class FactorizationError(CavitigaError):
    """Sparse factorization hit a numerically singular pivot."""


class EigenSolveError(CavitigaError):
    """Eigeniteration did not converge within the iteration budget."""

    def __init__(self, message, best_residuals=None):
        super().__init__(message)
        self.best_residuals = best_residuals


class IdentificationError(CavitigaError):
    """No computed mode qualifies as the accelerating mode."""


class WellPosednessError(CavitigaError):
    """Elasticity system is singular (insufficient constraints)."""
