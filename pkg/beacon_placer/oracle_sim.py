"""Independent checks on the solver: exact minimum covers, lower bounds and a
Monte-Carlo test of the sigma_r * GDOP error model.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .coverage import BeaconPlacement, ConnectivityMatrix
from .errors import CoverageError, DegenerateGeometryError, DomainError, InfeasibleError, InstanceSizeError
from .gdop import gdop_at
from .geometry import FloorPlan, SensorModel, coverage_mask
from .localization import LinearTrilaterator
from .utils import as_points

logger = logging.getLogger(__name__)

DEFAULT_MAX_SITES = 25
_CHUNK = 4096
_LP_TOLERANCE = 1e-7


@dataclass(frozen=True)
class SimReport:
    """Monte-Carlo localization error at one drone point."""

    point: Tuple[float, float, float]
    gdop: float
    per_point_rmse: float
    predicted_sigma: float
    trials: int
    sigma_r: float

    @property
    def ratio(self) -> float:
        if self.predicted_sigma == 0:
            return 1.0 if self.per_point_rmse == 0 else math.inf
        return self.per_point_rmse / self.predicted_sigma


def _check_k(k: int) -> None:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")


def _infeasible_points(bc: ConnectivityMatrix, k: int) -> np.ndarray:
    return np.flatnonzero(bc.column_sums() < k)


def counting_bound(bc: ConnectivityMatrix, k: int) -> int:
    """ceil(k |D| / max row sum): no site covers more than the busiest row."""
    _check_k(k)
    if bc.n_points == 0:
        return 0
    best_row = int(bc.row_sums().max()) if bc.n_sites else 0
    if best_row == 0:
        raise InfeasibleError("no site covers any point", uncovered=range(bc.n_points))
    return -(-k * bc.n_points // best_row)


def lp_bound(bc: ConnectivityMatrix, k: int) -> int:
    """Rounded-up optimum of the covering program with 0 <= b_i <= 1."""
    _check_k(k)
    bad = _infeasible_points(bc, k)
    if len(bad):
        raise InfeasibleError(f"{len(bad)} point(s) have fewer than {k} covering sites", uncovered=bad)
    if bc.n_points == 0:
        return 0
    n = bc.n_sites
    result = linprog(
        c=np.ones(n),
        A_ub=-bc.entries.T.astype(float),
        b_ub=-float(k) * np.ones(bc.n_points),
        bounds=[(0.0, 1.0)] * n,
        method="highs",
    )
    if result.status != 0:
        raise InfeasibleError(f"LP relaxation failed: {result.message}")
    logger.debug(f"LP relaxation optimum {result.fun:.6f}")
    return int(math.ceil(result.fun - _LP_TOLERANCE))


def lower_bound(bc: ConnectivityMatrix, k: int = 4) -> int:
    """max(counting bound, LP bound); both never exceed the integer optimum."""
    bad = _infeasible_points(bc, k)
    if len(bad):
        raise InfeasibleError(f"{len(bad)} point(s) have fewer than {k} covering sites", uncovered=bad)
    return max(counting_bound(bc, k), lp_bound(bc, k))


def brute_force_min_cover(bc: ConnectivityMatrix, k: int = 4,
                          max_sites: int = DEFAULT_MAX_SITES) -> Tuple[Optional[int], Tuple[int, ...]]:
    """Smallest site subset giving every point at least ``k`` covering sites.

    Subsets are enumerated by size, starting at the counting bound. Returns
    ``(None, ())`` when no subset works.
    """
    _check_k(k)
    if bc.n_sites > max_sites:
        raise InstanceSizeError(f"{bc.n_sites} sites exceed the exhaustive-search limit of {max_sites}")
    if bc.n_points == 0:
        return 0, ()
    if len(_infeasible_points(bc, k)):
        return None, ()
    rows = bc.entries.astype(np.int16)
    start = counting_bound(bc, k)
    for size in range(start, bc.n_sites + 1):
        combos = combinations(range(bc.n_sites), size)
        while True:
            chunk = np.fromiter((i for c in _take(combos, _CHUNK) for i in c), dtype=np.int64)
            if chunk.size == 0:
                break
            chunk = chunk.reshape(-1, size)
            counts = rows[chunk].sum(axis=1)
            ok = np.flatnonzero((counts >= k).all(axis=1))
            if len(ok):
                winner = tuple(int(i) for i in chunk[ok[0]])
                logger.debug(f"Exhaustive optimum {size}: sites {winner}")
                return size, winner
    return None, ()


def _take(iterator, n: int):
    for _ in range(n):
        try:
            yield next(iterator)
        except StopIteration:
            return


def _heard_masks(placement: BeaconPlacement, pts: np.ndarray, plan: FloorPlan, model: SensorModel) -> np.ndarray:
    if len(placement) == 0:
        return np.zeros((0, len(pts)), dtype=bool)
    return np.stack([coverage_mask(model, s, pts, plan) for s in placement.sites])


def solvable_points(placement: BeaconPlacement, points: Sequence[Sequence[float]], plan: FloorPlan,
                    model: SensorModel) -> np.ndarray:
    """True where a point hears at least four beacons that the closed-form solver can use.

    Beacons that all lie in one plane (a ceiling-only set, say) give a rank-deficient
    differenced system even when the GDOP there is finite.
    """
    pts = as_points(points)
    masks = _heard_masks(placement, pts, plan, model)
    positions = placement.positions
    ok = np.zeros(len(pts), dtype=bool)
    for j in range(len(pts)):
        heard = positions[masks[:, j]]
        if len(heard) < 4:
            continue
        try:
            LinearTrilaterator(heard)
        except DegenerateGeometryError:
            continue
        ok[j] = True
    return ok


def simulate_localization(placement: BeaconPlacement, points: Sequence[Sequence[float]], sigma_r: float,
                          trials: int, rng: np.random.Generator, plan: FloorPlan,
                          model: SensorModel) -> List[SimReport]:
    """Trilaterate each point from noisy ranges to the beacons that cover it.

    Ranges get independent zero-mean Gaussian noise of std ``sigma_r``. The error
    of each trial is measured against the noise-free solution of the same system.
    Raises ``DegenerateGeometryError`` for a point whose beacons are coplanar.
    """
    if not sigma_r >= 0:
        raise DomainError(f"sigma_r must be >= 0, got {sigma_r}")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    pts = as_points(points)
    positions = placement.positions
    masks = _heard_masks(placement, pts, plan, model)
    reports = []
    for j, point in enumerate(pts):
        heard = positions[masks[:, j]]
        if len(heard) < 4:
            raise CoverageError(f"point {tuple(point)} is covered by {len(heard)} beacon(s); 4 are needed")
        solver = LinearTrilaterator(heard)
        truth = np.linalg.norm(heard - point, axis=1)
        reference = solver.solve(truth)
        noisy = truth[:, None] + rng.normal(0.0, sigma_r, (len(heard), trials))
        estimates = solver.solve(noisy)
        err = estimates - reference[:, None]
        rmse = 0.0 if sigma_r == 0 else float(np.sqrt(np.mean(np.sum(err ** 2, axis=0))))
        g = gdop_at(point, heard).value
        reports.append(SimReport(tuple(float(c) for c in point), g, rmse, sigma_r * g, trials, sigma_r))
    return reports


__all__ = [
    "DEFAULT_MAX_SITES",
    "SimReport",
    "counting_bound",
    "lp_bound",
    "lower_bound",
    "brute_force_min_cover",
    "solvable_points",
    "simulate_localization",
]
