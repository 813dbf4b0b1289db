"""Exception types shared across the package."""

from __future__ import annotations


class DimensionError(ValueError):
    """Input block has the wrong size; ``agent`` names the offending block when known."""

    def __init__(self, message: str, agent: int | None = None):
        super().__init__(message)
        self.agent = agent


class GraphError(ValueError):
    pass


class GameValidationError(ValueError):
    """Raised by :func:`robust_gnep.model.require_valid` with the failing report attached."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleError(ValueError):
    """An LP feasibility problem has no solution; ``certificate`` holds the phase-1 multipliers."""

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class UnsupportedScaleError(ValueError):
    pass


class UnsupportedOperationError(TypeError):
    pass


class ProjectionError(RuntimeError):
    """Projection did not converge within the iteration cap."""

    def __init__(self, message: str, last_iterate=None, residual: float = float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class ConfigurationError(ValueError):
    """Solver parameters violate the convergence hypotheses."""


class ConfigError(ValueError):
    """Experiment config failed validation; ``pointer`` is a JSON pointer to the field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
