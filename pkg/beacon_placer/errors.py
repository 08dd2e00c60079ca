"""Exception types raised by BeaconPlacer.

Library code raises these; only the command line turns them into messages
and exit codes.
"""
from __future__ import annotations

from typing import Any, Optional, Sequence


class BeaconPlacerError(Exception):
    """Base class for every error raised by the package."""


class PlanParseError(BeaconPlacerError):
    """A floor-plan or placement document could not be parsed."""

    def __init__(self, message: str, source: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.source = source
        self.line = line
        self.column = column
        where = ""
        if source:
            where = source
            if line is not None:
                where += f":{line}"
                if column is not None:
                    where += f":{column}"
            where += ": "
        super().__init__(f"{where}{message}")


class PlanValidationError(BeaconPlacerError, ValueError):
    """A parsed document violates a model invariant."""

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


class EmptyDomainError(BeaconPlacerError):
    """Discretization produced no drone points or no beacon sites."""


class DomainError(BeaconPlacerError, ValueError):
    """A scalar argument is outside its legal range."""


class DegenerateGeometryError(BeaconPlacerError):
    """The anchor geometry does not determine a unique position."""


class CoincidentPointError(BeaconPlacerError):
    """A beacon coincides with the point being evaluated."""


class CoverageError(BeaconPlacerError):
    """A point is heard by fewer beacons than the operation requires."""


class InstanceSizeError(BeaconPlacerError):
    """An exhaustive search was requested on an instance that is too large."""


class InfeasibleError(BeaconPlacerError):
    """Some drone point cannot reach the required connectivity from any site set."""

    def __init__(self, message: str, uncovered: Sequence[int] = ()):
        self.uncovered = tuple(int(i) for i in uncovered)
        super().__init__(message)


class NonConvergenceError(BeaconPlacerError):
    """The evolutionary search hit its generation limit.

    ``best`` holds the best placement found so far so callers can still report it.
    """

    def __init__(self, message: str, best: Any = None, generations: int = 0):
        self.best = best
        self.generations = generations
        super().__init__(message)


__all__ = [
    "BeaconPlacerError",
    "PlanParseError",
    "PlanValidationError",
    "EmptyDomainError",
    "DomainError",
    "DegenerateGeometryError",
    "CoincidentPointError",
    "CoverageError",
    "InstanceSizeError",
    "InfeasibleError",
    "NonConvergenceError",
]
