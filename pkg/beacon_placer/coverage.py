"""Beacon-to-point connectivity and k-coverage.

The connectivity matrix BC is computed once per problem; the evolutionary
search only indexes it. Off-grid sites produced by continuous sampling or
mutation get their coverage column computed on demand and kept in a bounded
LRU cache keyed by position at 1 mm resolution.

With four or more beacons, a point whose covering beacons all lie in one plane
cannot be trilaterated; ``PlacementProblem.counts`` caps such points at 3.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, PlanValidationError
from .gdop import GdopField, field_from_masks
from .geometry import (
    BeaconDomain,
    BeaconSite,
    DroneDomain,
    FloorPlan,
    SensorModel,
    coverage_mask,
    discretize_domains,
    site_in_beacon_domain,
    surface_bounds,
    wasted_fraction,
    DEFAULT_RESOLUTION_M,
)
from .localization import anchors_span_space
from .utils import frozen_array, max_workers

logger = logging.getLogger(__name__)

OFFGRID_CACHE_SIZE = 4096


class _SiteKey:
    """Hashes a site by its 1 mm key so the LRU caches treat equal positions as one entry."""

    __slots__ = ("site", "key")

    def __init__(self, site: BeaconSite):
        self.site = site
        self.key = site.key()

    def __hash__(self) -> int:
        return hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, _SiteKey) and self.key == other.key


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """Boolean |B| x |D| matrix; ``entries[i, j]`` is true iff site i covers point j.

    Row order follows ``sites`` and column order follows ``points``.
    """

    entries: np.ndarray
    sites: Tuple[BeaconSite, ...] = ()
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "entries", frozen_array(np.atleast_2d(self.entries), bool))
        object.__setattr__(self, "sites", tuple(self.sites))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    @property
    def n_sites(self) -> int:
        return self.entries.shape[0]

    @property
    def n_points(self) -> int:
        return self.entries.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)


@dataclass(frozen=True)
class BeaconPlacement:
    """A set of selected beacon sites; no two may coincide."""

    sites: Tuple[BeaconSite, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        seen = set()
        for site in self.sites:
            key = site.key()[1:]
            if key in seen:
                raise PlanValidationError("distinct-sites", f"two beacons coincide at {site.position}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sites], dtype=float).reshape(-1, 3)

    def sorted(self) -> "BeaconPlacement":
        return BeaconPlacement(tuple(sorted(self.sites, key=lambda s: s.position)))

    def check_in_domain(self, plan: FloorPlan) -> None:
        """Raise ``PlanValidationError('beacon-domain')`` for any site off the legal surfaces."""
        for idx, site in enumerate(self.sites):
            if not site_in_beacon_domain(plan, site):
                raise PlanValidationError("beacon-domain",
                                          f"beacon {idx} at {site.position} ({site.surface}) is not on the "
                                          "ceiling or the top half of a wall")


def build_connectivity(domain_b: BeaconDomain, domain_d: DroneDomain, model: SensorModel, plan: FloorPlan,
                       workers: Optional[int] = None) -> ConnectivityMatrix:
    """Evaluate ``beacon_covers`` for every (site, point) pair; rows are filled in parallel."""
    points = domain_d.points
    sites = domain_b.sites
    entries = np.zeros((len(sites), len(points)), dtype=bool)
    workers = workers or max_workers()

    def _row(i: int) -> None:
        entries[i] = coverage_mask(model, sites[i], points, plan)

    if workers > 1 and len(sites) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_row, range(len(sites))))
    else:
        for i in range(len(sites)):
            _row(i)
    logger.debug(f"Connectivity matrix {entries.shape}, {int(entries.sum())} covered pairs")
    return ConnectivityMatrix(entries, sites, points)


def coverage_counts(bc: ConnectivityMatrix, selection: Sequence[int]) -> np.ndarray:
    """Number of selected sites covering each point."""
    sel = np.asarray(list(selection), dtype=int)
    if sel.size == 0:
        return np.zeros(bc.n_points, dtype=int)
    return bc.entries[sel].sum(axis=0)


def fraction_at_least(counts: np.ndarray, k: int) -> float:
    if len(counts) == 0:
        return 0.0
    return float(np.count_nonzero(counts >= k)) / len(counts)


def k_coverage_fraction(bc: ConnectivityMatrix, selection: Sequence[int], k: int) -> float:
    """Fraction of drone points covered by at least ``k`` selected sites."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return fraction_at_least(coverage_counts(bc, selection), k)


def total_coverage(bc: ConnectivityMatrix, selection: Sequence[int]) -> float:
    """Fraction of drone points covered by at least one selected site."""
    return k_coverage_fraction(bc, selection, 1)


class PlacementProblem:
    """Everything the search needs: domains, sensor model, BC and coverage caches.

    Synthetic instances built with ``from_matrix`` have no floor plan; they support
    the coverage parts of the search but not GDOP or wasted-coverage scoring.
    """

    def __init__(self, bc: ConnectivityMatrix, plan: Optional[FloorPlan] = None,
                 model: Optional[SensorModel] = None, drone_domain: Optional[DroneDomain] = None,
                 beacon_domain: Optional[BeaconDomain] = None, full_height: bool = False,
                 cache_size: int = OFFGRID_CACHE_SIZE):
        if cache_size < 1:
            raise DomainError(f"cache_size must be >= 1, got {cache_size}")
        self.bc = bc
        self.plan = plan
        self.model = model
        self.drone_domain = drone_domain
        self.beacon_domain = beacon_domain or BeaconDomain(bc.sites, 0.0)
        self.full_height = full_height
        self._site_positions = np.array([s.position for s in self.beacon_domain.sites],
                                        dtype=float).reshape(-1, 3)
        self._offgrid_column = lru_cache(maxsize=cache_size)(self._compute_column)
        self._site_waste = lru_cache(maxsize=len(self.beacon_domain.sites) + cache_size)(self._compute_waste)

    @classmethod
    def build(cls, plan: FloorPlan, model: Optional[SensorModel] = None,
              drone_res_m: float = DEFAULT_RESOLUTION_M, beacon_res_m: float = DEFAULT_RESOLUTION_M,
              full_height: bool = False, workers: Optional[int] = None,
              cache_size: int = OFFGRID_CACHE_SIZE) -> "PlacementProblem":
        model = model or SensorModel()
        domain_d, domain_b = discretize_domains(plan, drone_res_m, beacon_res_m, full_height)
        bc = build_connectivity(domain_b, domain_d, model, plan, workers)
        logger.info(f"Placement problem: |D|={len(domain_d)} points, |B|={len(domain_b)} sites")
        return cls(bc, plan, model, domain_d, domain_b, full_height, cache_size)

    @classmethod
    def from_matrix(cls, entries) -> "PlacementProblem":
        """Abstract instance from a hand-built boolean matrix (rows = sites, columns = points)."""
        entries = np.atleast_2d(np.asarray(entries, dtype=bool))
        sites = tuple(BeaconSite((float(i), 0.0, 0.0), (0.0, 0.0, -1.0), surface="synthetic")
                      for i in range(entries.shape[0]))
        return cls(ConnectivityMatrix(entries, sites))

    @property
    def has_geometry(self) -> bool:
        return self.plan is not None and self.model is not None and self.drone_domain is not None

    @property
    def n_points(self) -> int:
        return self.bc.n_points

    @property
    def sites(self) -> Tuple[BeaconSite, ...]:
        return self.beacon_domain.sites

    @property
    def resolution_m(self) -> float:
        return self.beacon_domain.resolution_m

    def site_index(self, site: BeaconSite) -> Optional[int]:
        return self.beacon_domain.index_of.get(site.key())

    def column(self, site: BeaconSite) -> np.ndarray:
        """Coverage of ``site`` over D: a BC row for grid sites, computed and cached otherwise."""
        idx = self.site_index(site)
        if idx is not None:
            return self.bc.entries[idx]
        if not self.has_geometry:
            raise ValueError(f"site {site.position} is not part of this synthetic instance")
        return self._offgrid_column(_SiteKey(site))

    def _compute_column(self, keyed: _SiteKey) -> np.ndarray:
        column = coverage_mask(self.model, keyed.site, self.drone_domain.points, self.plan)
        column.flags.writeable = False
        return column

    def cache_info(self) -> dict:
        """Hit/miss statistics of the off-grid column and waste caches."""
        return {"columns": self._offgrid_column.cache_info(), "waste": self._site_waste.cache_info()}

    def counts(self, sites: Iterable[BeaconSite]) -> np.ndarray:
        """Covering beacons per point.

        On a floor plan, a point with four or more covering beacons that all lie in
        one plane counts as 3.
        """
        sites = list(sites)
        if not sites:
            return np.zeros(self.n_points, dtype=np.int32)
        masks = np.stack([self.column(s) for s in sites])
        total = masks.sum(axis=0, dtype=np.int32)
        if self.has_geometry and len(sites) >= 4:
            positions = np.array([s.position for s in sites], dtype=float)
            flat = (total >= 4) & ~anchors_span_space(masks, positions)
            total[flat] = 3
        return total

    def per_k_fractions(self, sites: Iterable[BeaconSite], k_max: int = 4) -> Tuple[float, ...]:
        counts = self.counts(sites)
        return tuple(fraction_at_least(counts, k) for k in range(1, k_max + 1))

    def waste(self, site: BeaconSite) -> float:
        """Wasted-coverage fraction of one site (0 for synthetic instances)."""
        if not self.has_geometry:
            return 0.0
        return self._site_waste(_SiteKey(site))

    def _compute_waste(self, keyed: _SiteKey) -> float:
        return wasted_fraction(self.model, keyed.site, self.plan, self.full_height)

    def spanning_sites(self) -> np.ndarray:
        """Per point, whether its covering grid sites are not all in one plane."""
        if not self.has_geometry:
            return np.ones(self.n_points, dtype=bool)
        return anchors_span_space(self.bc.entries, self._site_positions)

    def gdop_field(self, sites: Sequence[BeaconSite]) -> GdopField:
        if not self.has_geometry:
            raise ValueError("GDOP needs a floor plan; this is a synthetic instance")
        sites = list(sites)
        points = self.drone_domain.points
        if not sites:
            return field_from_masks(points, np.zeros((0, 3)), np.zeros((0, len(points)), dtype=bool))
        masks = np.stack([self.column(s) for s in sites])
        positions = np.array([s.position for s in sites], dtype=float)
        return field_from_masks(points, positions, masks)

    def surfaces(self) -> Tuple[str, ...]:
        return tuple(self.beacon_domain.by_surface)

    def sample_site(self, surface: str, rng: np.random.Generator, continuous: bool = False,
                    exclude: Iterable[BeaconSite] = ()) -> BeaconSite:
        """Random site on ``surface``: a grid site, or a uniform point of the surface when ``continuous``.

        Grid sampling avoids sites in ``exclude`` while any remain.
        """
        taken = {s.key() for s in exclude}
        if continuous and self.has_geometry:
            site = self._sample_continuous(surface, rng)
            if site.key() not in taken:
                return site
        pool = [i for i in self.beacon_domain.by_surface[surface] if self.sites[i].key() not in taken]
        if not pool:
            pool = [i for i in range(len(self.sites)) if self.sites[i].key() not in taken]
        if not pool:
            pool = list(self.beacon_domain.by_surface[surface])
        return self.sites[pool[int(rng.integers(len(pool)))]]

    def _sample_continuous(self, surface: str, rng: np.random.Generator) -> BeaconSite:
        template = self.sites[self.beacon_domain.by_surface[surface][0]]
        lo, hi = surface_bounds(self.plan, surface)
        for _ in range(1000):
            pos = tuple(lo[i] + (hi[i] - lo[i]) * rng.random() for i in range(3))
            site = template.moved_to(pos)
            if site_in_beacon_domain(self.plan, site):
                return site
        return template

    def snap(self, site: BeaconSite) -> BeaconSite:
        """Nearest grid site on the same surface."""
        idx = np.asarray(self.beacon_domain.by_surface[site.surface])
        d = np.linalg.norm(self.beacon_domain.positions[idx] - np.asarray(site.position), axis=1)
        return self.sites[int(idx[int(np.argmin(d))])]


__all__ = [
    "ConnectivityMatrix",
    "BeaconPlacement",
    "PlacementProblem",
    "build_connectivity",
    "coverage_counts",
    "fraction_at_least",
    "k_coverage_fraction",
    "total_coverage",
]
