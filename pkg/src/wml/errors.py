"""Exception hierarchy shared by all modules."""


class WmlError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WmlError):
    """Invalid user configuration (bad scenario name, bad flag values, ...)."""


class DomainError(WmlError):
    """A SurfaceDomain violates its own invariants."""


class MeshError(WmlError):
    """Mesh generation failed or a mesh violates its invariants."""


class GeometryAmbiguityError(WmlError):
    """A geometric probe (normal direction, point location) was inconclusive."""


class MorseViolationError(WmlError):
    """f is not Morse at the requested tolerance (degenerate Hessian, ...)."""


class MorseSmaleViolationError(WmlError):
    """A non-transverse intersection of stable/unstable manifolds was detected."""


class ComplexInconsistencyError(WmlError):
    """The assembled chain complex fails an exact integer identity."""


class IntegrationFailureError(WmlError):
    """Flow-line integration stagnated away from any critical point."""


class ResolutionError(WmlError):
    """A spectral quantity could not be resolved (threshold not bracketed,
    near-kernel not separated, mesh too coarse for the requested T)."""


class SolverError(WmlError):
    """Eigenvalue iteration failed to meet its accuracy contract."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class OverflowRangeError(WmlError):
    """Deformation weights would leave floating-point range."""
