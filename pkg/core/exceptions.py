# core/exceptions.py

from typing import Any, Optional


class GroundLabError(Exception):
    """Base class for every error raised by the lab"""


class InvalidDomainError(GroundLabError):
    """Domain parameters violate convexity, orientation or positivity"""


class OutsideDomainError(GroundLabError):
    """A point lies outside the closed domain"""

    def __init__(self, point: Any):
        super().__init__(f"outside domain: {tuple(point)}")
        self.point = point


class DegenerateProjectionError(GroundLabError):
    """Projection requested for a boundary point"""


class GridTooCoarseError(GroundLabError):
    """Grid spacing is too large for the domain"""


class OutsideHullError(GroundLabError):
    """Evaluation point leaves the grid hull"""


class NonConvergenceError(GroundLabError):
    """Descent did not reach the tolerance; carries the best iterate found"""

    def __init__(self, message: str, best_iterate: Any = None, best_lambda: Optional[float] = None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.best_lambda = best_lambda


class ScheduleFailureError(GroundLabError):
    """The eigenvalue trail moved away from the infinity eigenvalue"""


class EpsilonTooLargeError(GroundLabError):
    """The inner set A_eps is empty for this epsilon"""


class CriticalStartError(GroundLabError):
    """Gradient flow started in the critical set"""


class HypothesisViolatedError(GroundLabError):
    """Boundary gradient hypothesis degenerates (b_eps >= 1)"""


class ConfigError(GroundLabError):
    """Experiment file failed to parse or validate"""


class ManifestMissingError(GroundLabError):
    """Run directory has no MANIFEST"""
