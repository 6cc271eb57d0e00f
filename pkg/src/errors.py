"""Exception hierarchy shared by every module of the toolkit."""

from typing import Optional, Sequence


class ToolkitError(Exception):
    """Base error carrying the stage (module or CLI verb) where it was raised."""

    def __init__(self, message: str, stage: str = "toolkit"):
        super().__init__(message)
        self.stage = stage


class GeometryError(ToolkitError):
    def __init__(self, message: str):
        super().__init__(message, "geometry")


class DegenerateJacobian(ToolkitError):
    def __init__(self, message: str, min_jacobian: float):
        super().__init__(message, "geometry")
        self.min_jacobian = min_jacobian


class GridMismatch(ToolkitError):
    def __init__(self, message: str, stage: str = "geometry"):
        super().__init__(message, stage)


class UnsupportedDerivative(ToolkitError):
    def __init__(self, message: str):
        super().__init__(message, "geometry")


class EosDomainError(ToolkitError):
    def __init__(self, message: str):
        super().__init__(message, "eos")


class CollinearFields(ToolkitError):
    def __init__(self, message: str, stage: str = "stability"):
        super().__init__(message, stage)


class StabilityViolated(ToolkitError):
    def __init__(self, message: str, margin: Optional[float] = None):
        super().__init__(message, "stability")
        self.margin = margin


class AliasingError(ToolkitError):
    def __init__(self, message: str):
        super().__init__(message, "paradiff")


class NotMeanZero(ToolkitError):
    def __init__(self, message: str, mean: float):
        super().__init__(message, "dtn")
        self.mean = mean


class SolverNonConvergence(ToolkitError):
    """Raised when a Krylov solve hits its iteration cap above tolerance."""

    def __init__(self, message: str, iterations: int, residual: float, stage: str = "dtn"):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})", stage)
        self.iterations = iterations
        self.residual = residual


class CFLViolation(ToolkitError):
    def __init__(self, message: str, dt: float, dt_max: float):
        super().__init__(message, "interface_evolution")
        self.dt = dt
        self.dt_max = dt_max


class MissingHistory(ToolkitError):
    def __init__(self, message: str, stage: str = "interface_evolution"):
        super().__init__(message, stage)


class SchemaError(ToolkitError):
    def __init__(self, message: str, lines: Sequence[int] = ()):
        detail = f"{message} (lines: {list(lines)})" if lines else message
        super().__init__(detail, "ingestion")
        self.lines = list(lines)


class ConfigError(ToolkitError):
    def __init__(self, message: str):
        super().__init__(message, "config")
