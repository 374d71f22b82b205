"""Exception hierarchy shared by all solver modules."""


class RoughWallError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(RoughWallError):
    """Invalid or degenerate geometry (charts, tubes, rough boundaries)."""


class DegenerateChartError(GeometryError):
    pass


class OutOfTubeError(GeometryError):
    pass


class ResolutionError(GeometryError):
    """Grid too coarse for the requested roughness scale."""


class InvalidCoefficientsError(RoughWallError):
    pass


class SolverBreakdownError(RoughWallError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ToleranceNotReachedError(RoughWallError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final relative residual {residual:.3e})")
        self.residual = residual


class IncompatibleError(RoughWallError):
    """Two objects that must share a discretization or spec do not."""


class IllPosedBoundaryError(RoughWallError):
    pass


class CompatibilityError(RoughWallError):
    """Source term violates a solvability (zero-mean) condition."""


class DecompositionError(RoughWallError):
    pass


class ConfigError(RoughWallError):
    pass


class SlipFieldError(RoughWallError):
    """Slip-field assembly failed or the field is corrupt."""


class PipelineError(RoughWallError):
    """A pipeline stage failed; ``stage`` names it and ``eps`` the sweep point, if any."""

    def __init__(self, stage, cause, eps=None):
        where = stage if eps is None else f"{stage} (eps={eps:g})"
        super().__init__(f"[{where}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.eps = eps
        self.cause = cause
