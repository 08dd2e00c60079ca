"""Time-of-arrival ranging and closed-form 3D trilateration.

Each range equation ``|x - p_i|^2 = d_i^2`` is differenced against the last
measurement, which cancels ``|x|^2`` and leaves the linear system

    2 (p_n - p_i) . x = d_i^2 - d_n^2 - |p_i|^2 + |p_n|^2,   i = 1 .. n-1

solved by weighted least squares. With exact ranges the solution does not depend
on which measurement is used as the reference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DegenerateGeometryError, DomainError

logger = logging.getLogger(__name__)

SPEED_OF_SOUND_MPS = 343.0
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class RangeMeasurement:
    """Distance from one beacon; ``weight`` is an SNR-derived quality (default 1)."""

    beacon_position: Tuple[float, float, float]
    distance_m: float
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beacon_position", tuple(float(v) for v in self.beacon_position))
        if len(self.beacon_position) != 3:
            raise DomainError("beacon_position must have 3 components")
        if not self.distance_m >= 0:
            raise DomainError(f"distance_m must be >= 0, got {self.distance_m}")
        if not self.weight >= 0:
            raise DomainError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class TrilaterationProblem:
    measurements: Tuple[RangeMeasurement, ...]

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if len(self.measurements) < 4:
            raise DomainError(f"trilateration needs at least 4 measurements, got {len(self.measurements)}")

    @classmethod
    def from_ranges(cls, positions: Sequence[Sequence[float]], distances: Sequence[float],
                    weights: Sequence[float] = None) -> "TrilaterationProblem":
        if weights is None:
            weights = [1.0] * len(distances)
        return cls(tuple(RangeMeasurement(tuple(p), float(d), float(w))
                         for p, d, w in zip(positions, distances, weights)))

    @property
    def positions(self) -> np.ndarray:
        return np.array([m.beacon_position for m in self.measurements], dtype=float)

    @property
    def distances(self) -> np.ndarray:
        return np.array([m.distance_m for m in self.measurements], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.measurements], dtype=float)


def range_from_toa(time_of_flight_s: float, speed_of_sound_mps: float = SPEED_OF_SOUND_MPS) -> float:
    """Convert a time of flight to a range, d = c * t."""
    if time_of_flight_s < 0:
        raise DomainError(f"time of flight must be >= 0, got {time_of_flight_s}")
    if speed_of_sound_mps <= 0:
        raise DomainError(f"speed of sound must be > 0, got {speed_of_sound_mps}")
    return float(time_of_flight_s) * float(speed_of_sound_mps)


def build_linear_system(positions: np.ndarray, distances: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return (A, b) of the differenced system, referenced to the last row.

    ``distances`` may be 1-D (one solve) or 2-D with one column per right-hand side.
    """
    positions = np.asarray(positions, dtype=float)
    d = np.asarray(distances, dtype=float)
    ref = positions[-1]
    A = 2.0 * (ref - positions[:-1])
    sq = np.sum(positions ** 2, axis=1)
    geometry_term = sq[-1] - sq[:-1]
    if d.ndim == 1:
        b = d[:-1] ** 2 - d[-1] ** 2 + geometry_term
    else:
        b = d[:-1] ** 2 - d[-1] ** 2 + geometry_term[:, None]
    return A, b


class LinearTrilaterator:
    """Weighted least-squares solver for one fixed anchor geometry.

    The factorization is checked once for degeneracy and then reused for any number
    of range vectors.
    """

    def __init__(self, positions: np.ndarray, weights: np.ndarray = None):
        self.positions = np.asarray(positions, dtype=float)
        n = len(self.positions)
        if n < 4:
            raise DomainError(f"trilateration needs at least 4 beacons, got {n}")
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        A, _ = build_linear_system(self.positions, np.zeros(n))
        self._row_scale = np.sqrt(w[:-1])
        self._A = A * self._row_scale[:, None]
        s = np.linalg.svd(self._A, compute_uv=False)
        if len(s) < 3 or s[-1] <= 0 or (s[0] / s[-1]) ** 2 > MAX_CONDITION:
            cond = np.inf if len(s) < 3 or s[-1] <= 0 else (s[0] / s[-1]) ** 2
            raise DegenerateGeometryError(
                f"anchor geometry is degenerate (condition number of A^T W A = {cond:.3g}); "
                "beacons are coplanar or coincident")

    def solve(self, distances: np.ndarray) -> np.ndarray:
        """Solve for one range vector (returns shape (3,)) or many (columns; returns (3, m))."""
        _, b = build_linear_system(self.positions, distances)
        if b.ndim == 1:
            b = b * self._row_scale
        else:
            b = b * self._row_scale[:, None]
        x, *_ = np.linalg.lstsq(self._A, b, rcond=None)
        return x


def anchors_span_space(masks: np.ndarray, positions: np.ndarray, min_anchors: int = 4) -> np.ndarray:
    """For every column of ``masks``, whether the masked anchors allow a unique 3D fix.

    ``masks`` is (anchors, points). A point qualifies when it has ``min_anchors`` or
    more anchors and their scatter matrix has a condition number within
    ``MAX_CONDITION``, i.e. the anchors are not all in one plane.
    """
    m = np.atleast_2d(np.asarray(masks, dtype=float))
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = m.sum(axis=0)
    spans = np.zeros(m.shape[1], dtype=bool)
    cols = np.flatnonzero(n >= max(min_anchors, 4))
    if len(cols) == 0:
        return spans
    q = p - p.mean(axis=0)
    mc = m[:, cols]
    first = mc.T @ q
    second = (mc.T @ (q[:, :, None] * q[:, None, :]).reshape(len(q), 9)).reshape(-1, 3, 3)
    scatter = second - first[:, :, None] * first[:, None, :] / n[cols, None, None]
    eig = np.linalg.eigvalsh(scatter)
    spans[cols] = (eig[:, -1] > 0) & (eig[:, 0] * MAX_CONDITION > eig[:, -1])
    return spans


def trilaterate(problem: TrilaterationProblem) -> np.ndarray:
    """Estimate the receiver position from four or more ranges.

    Raises ``DegenerateGeometryError`` when A^T W A is singular or its condition number
    exceeds 1e12.
    """
    solver = LinearTrilaterator(problem.positions, problem.weights)
    return solver.solve(problem.distances)


__all__ = [
    "SPEED_OF_SOUND_MPS",
    "MAX_CONDITION",
    "RangeMeasurement",
    "TrilaterationProblem",
    "range_from_toa",
    "build_linear_system",
    "LinearTrilaterator",
    "anchors_span_space",
    "trilaterate",
]
