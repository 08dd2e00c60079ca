"""Geometric dilution of precision.

With the clock offset fixed at zero, the position covariance of a range-based fix
is sigma_r^2 * Q where Q = (C^T C)^-1 and C stacks the unit vectors from the
receiver to each beacon. GDOP = sqrt(trace Q) is the pure geometry factor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import CoincidentPointError, DegenerateGeometryError, DomainError
from .geometry import coverage_mask
from .utils import as_points, frozen_array

logger = logging.getLogger(__name__)

GDOP_CAP = 1e6
MAX_CONDITION = 1e12
MIN_BEACONS_3D = 4


class Band(Enum):
    """Quality bands for GDOP values."""

    MEASUREMENT_ERROR_OR_REDUNDANCY = "MeasurementErrorOrRedundancy"
    IDEAL = "Ideal"
    VERY_GOOD = "VeryGood"
    GOOD = "Good"
    MEDIUM = "Medium"
    SUFFICIENT = "Sufficient"
    BAD = "Bad"

    def __str__(self) -> str:
        return self.value


# (upper bound inclusive, band); value exactly 1 is Ideal
_BAND_LIMITS = (
    (2.0, Band.VERY_GOOD),
    (5.0, Band.GOOD),
    (10.0, Band.MEDIUM),
    (20.0, Band.SUFFICIENT),
)


def classify_band(value: float) -> Band:
    if not value > 0:
        raise DomainError(f"GDOP must be positive, got {value}")
    if value < 1.0:
        return Band.MEASUREMENT_ERROR_OR_REDUNDANCY
    if value == 1.0:
        return Band.IDEAL
    for upper, band in _BAND_LIMITS:
        if value <= upper:
            return band
    return Band.BAD


def band_upper_limit(band: Band) -> float:
    """Largest GDOP value that still classifies as ``band`` (inf for Bad)."""
    if band is Band.MEASUREMENT_ERROR_OR_REDUNDANCY:
        return 1.0
    if band is Band.IDEAL:
        return 1.0
    for upper, b in _BAND_LIMITS:
        if b is band:
            return upper
    return math.inf


def within_target_band(value: float, gdop_threshold_g: float) -> bool:
    """True when ``value`` classifies in the band of ``gdop_threshold_g`` or a better one."""
    return value <= band_upper_limit(classify_band(gdop_threshold_g))


@dataclass(frozen=True)
class GdopResult:
    value: float
    band: Band
    singular: bool = False


def direction_cosine_matrix(target: Sequence[float], beacons) -> np.ndarray:
    """Rows are unit vectors from ``target`` to each beacon."""
    b = as_points(beacons)
    diff = b - np.asarray(target, dtype=float)
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0):
        idx = int(np.flatnonzero(r == 0)[0])
        raise CoincidentPointError(f"beacon {idx} coincides with the target {tuple(target)}")
    return diff / r[:, None]


def _singular() -> GdopResult:
    return GdopResult(GDOP_CAP, Band.BAD, True)


def gdop_at(target: Sequence[float], beacons) -> GdopResult:
    """GDOP of a fix at ``target`` from every beacon in ``beacons``.

    Rank-deficient or ill-conditioned geometry (condition number of C^T C above 1e12)
    is flagged singular and capped at 1e6.
    """
    C = direction_cosine_matrix(target, beacons)
    if len(C) < 3:
        return _singular()
    G = C.T @ C
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        return _singular()
    Q = np.linalg.inv(G)
    value = float(math.sqrt(np.trace(Q)))
    return GdopResult(value, classify_band(value), False)


def gdop_values(points: np.ndarray, beacon_positions: np.ndarray, masks: np.ndarray,
                min_beacons: int = MIN_BEACONS_3D) -> Tuple[np.ndarray, np.ndarray]:
    """GDOP at many points at once.

    ``masks[b, j]`` says whether beacon ``b`` is heard at point ``j``. Points heard by
    fewer than ``min_beacons`` beacons, or with singular geometry, get the cap and are
    flagged in the returned boolean array.
    """
    points = as_points(points)
    n_points = len(points)
    values = np.full(n_points, GDOP_CAP)
    singular = np.ones(n_points, dtype=bool)
    if len(beacon_positions) == 0 or n_points == 0:
        return values, singular
    masks = np.asarray(masks, dtype=bool)
    counts = masks.sum(axis=0)
    ok = counts >= min_beacons
    if not ok.any():
        return values, singular
    pts = points[ok]
    m = masks[:, ok].astype(float)
    diff = np.asarray(beacon_positions, dtype=float)[:, None, :] - pts[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(r[..., None] > 0, diff / r[..., None], 0.0)
    unit = unit * m[..., None]
    G = np.einsum("bji,bjk->jik", unit, unit)
    cond = np.linalg.cond(G)
    good = np.isfinite(cond) & (cond <= MAX_CONDITION)
    sub = np.full(len(pts), GDOP_CAP)
    if good.any():
        Q = np.linalg.inv(G[good])
        sub[good] = np.sqrt(np.trace(Q, axis1=1, axis2=2))
    values[ok] = sub
    singular[ok] = ~good
    return values, singular


@dataclass(frozen=True, eq=False)
class GdopField:
    """Per-point GDOP over the drone domain.

    ``average`` includes capped values of under-covered or singular points;
    ``covered_average`` is taken only over points heard by at least four beacons.
    """

    points: np.ndarray
    values: np.ndarray
    singular: np.ndarray
    covered: np.ndarray

    def __post_init__(self):
        for name in ("points", "values", "singular", "covered"):
            object.__setattr__(self, name, frozen_array(getattr(self, name),
                                                       bool if name in ("singular", "covered") else float))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, idx: int) -> GdopResult:
        value = float(self.values[idx])
        if self.singular[idx]:
            return GdopResult(value, Band.BAD, True)
        return GdopResult(value, classify_band(value), False)

    def __iter__(self) -> Iterator[GdopResult]:
        for i in range(len(self)):
            yield self[i]

    @property
    def per_point(self) -> dict:
        return {tuple(float(c) for c in p): self[i] for i, p in enumerate(self.points)}

    @property
    def average(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else GDOP_CAP

    @property
    def covered_average(self) -> float:
        if not self.covered.any():
            return GDOP_CAP
        return float(np.mean(self.values[self.covered]))

    @property
    def fraction_singular(self) -> float:
        return float(np.mean(self.singular)) if len(self.singular) else 1.0

    @property
    def bands(self) -> Tuple[Band, ...]:
        return tuple(r.band for r in self)

    def objective(self, coverage_threshold: float = 1.0) -> float:
        """GDOP_avg as scored by the search: the full average under strict coverage,
        the covered-point average when coverage is relaxed below 1.0."""
        return self.average if coverage_threshold >= 1.0 else self.covered_average


def field_from_masks(points: np.ndarray, beacon_positions: np.ndarray, masks: np.ndarray) -> GdopField:
    points = as_points(points) if len(points) else np.zeros((0, 3))
    values, singular = gdop_values(points, beacon_positions, masks)
    counts = np.asarray(masks, dtype=bool).sum(axis=0) if len(beacon_positions) else np.zeros(len(points), int)
    return GdopField(points, values, singular, counts >= MIN_BEACONS_3D)


def gdop_field(domain, placement, plan, model) -> GdopField:
    """GDOP at every drone-domain point from exactly the beacons that cover it."""
    sites = list(placement.sites)
    points = domain.points
    if not sites:
        masks = np.zeros((0, len(points)), dtype=bool)
        return field_from_masks(points, np.zeros((0, 3)), masks)
    masks = np.stack([coverage_mask(model, s, points, plan) for s in sites])
    positions = np.array([s.position for s in sites], dtype=float)
    return field_from_masks(points, positions, masks)


# ---------------------------------------------------------------------------
# Two-dimensional bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Crb2dInput:
    beacon_angles_rad: Tuple[float, ...]
    sigma_r: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beacon_angles_rad", tuple(float(a) for a in self.beacon_angles_rad))
        if len(self.beacon_angles_rad) < 2:
            raise DomainError("the 2D bound needs at least two beacons")
        if not self.sigma_r > 0:
            raise DomainError(f"sigma_r must be > 0, got {self.sigma_r}")


def _pairwise_sines(angles: Sequence[float]) -> np.ndarray:
    a = np.asarray(angles, dtype=float)
    i, j = np.triu_indices(len(a), k=1)
    return np.sin(a[i] - a[j])


def crb_2d(data: Crb2dInput) -> float:
    """sigma_r * sqrt(N / sum_{k<j} |sin(theta_k - theta_j)|)."""
    total = float(np.sum(np.abs(_pairwise_sines(data.beacon_angles_rad))))
    if total <= 1e-15:
        raise DegenerateGeometryError("all beacons share the same (or opposite) bearing")
    return data.sigma_r * math.sqrt(len(data.beacon_angles_rad) / total)


def dop_2d_trace(beacon_angles_rad: Sequence[float]) -> float:
    """2D DOP from the trace of (H^T H)^-1, which reduces to sqrt(N / sum sin^2)."""
    total = float(np.sum(_pairwise_sines(beacon_angles_rad) ** 2))
    if total <= 1e-15:
        raise DegenerateGeometryError("all beacons share the same (or opposite) bearing")
    return math.sqrt(len(beacon_angles_rad) / total)


__all__ = [
    "GDOP_CAP",
    "MAX_CONDITION",
    "MIN_BEACONS_3D",
    "Band",
    "GdopResult",
    "GdopField",
    "Crb2dInput",
    "classify_band",
    "band_upper_limit",
    "within_target_band",
    "direction_cosine_matrix",
    "gdop_at",
    "gdop_values",
    "field_from_masks",
    "gdop_field",
    "crb_2d",
    "dop_2d_trace",
]
