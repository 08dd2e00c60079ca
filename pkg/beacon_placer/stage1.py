"""Stage 1: grow placements one beacon per generation until every point has k-connectivity.

The search runs in stages k = 1 .. k_target. In every generation each survivor
spawns offspring that add exactly one beacon, parents compete with their
offspring, and the best ``survivor_count_s`` individuals are kept. A stage ends
when the best individual covers every drone point with at least k beacons.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .coverage import BeaconPlacement, PlacementProblem, fraction_at_least
from .errors import DomainError, InfeasibleError, NonConvergenceError
from .geometry import BeaconSite
from .utils import max_workers, substreams

logger = logging.getLogger(__name__)

REPORTED_K = 4


@dataclass(frozen=True)
class EaConfig:
    """Parameters shared by both search stages."""

    population_size_p: int = 250
    survivor_count_s: int = 5
    k_target: int = 4
    coverage_threshold: float = 1.0
    gdop_threshold_g: float = 20.0
    rng_seed: int = 0
    max_generations: int = 500
    mutation_rate: float = 0.1
    mutation: bool = True
    continuous: bool = False
    drop_pass: bool = True

    def __post_init__(self):
        if self.population_size_p < 1:
            raise DomainError(f"population_size_p must be >= 1, got {self.population_size_p}")
        if self.survivor_count_s < 1:
            raise DomainError(f"survivor_count_s must be >= 1, got {self.survivor_count_s}")
        if self.population_size_p % self.survivor_count_s:
            raise DomainError(f"survivor_count_s ({self.survivor_count_s}) must divide "
                              f"population_size_p ({self.population_size_p})")
        if self.k_target < 1:
            raise DomainError(f"k_target must be >= 1, got {self.k_target}")
        if not 0 < self.coverage_threshold <= 1:
            raise DomainError(f"coverage_threshold must be in (0, 1], got {self.coverage_threshold}")
        if not self.gdop_threshold_g > 0:
            raise DomainError(f"gdop_threshold_g must be > 0, got {self.gdop_threshold_g}")
        if self.max_generations < 1:
            raise DomainError(f"max_generations must be >= 1, got {self.max_generations}")
        if not 0 <= self.mutation_rate <= 1:
            raise DomainError(f"mutation_rate must be in [0, 1], got {self.mutation_rate}")
        if not 0 <= self.rng_seed < 2**64:
            raise DomainError(f"rng_seed must be an unsigned 64-bit integer, got {self.rng_seed}")

    def to_dict(self) -> dict:
        return asdict(self)


class Fitness(NamedTuple):
    """Lexicographic Stage 1 score; larger is better in every field."""

    k_fraction: float
    net_coverage: float
    neg_gdop: float


@dataclass(frozen=True)
class Individual:
    beacons: BeaconPlacement
    fitness: Fitness
    per_k_fractions: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.beacons)


@dataclass(frozen=True)
class CandidatePlacement:
    """One of the equally sized placements Stage 1 hands to Stage 2."""

    beacons: BeaconPlacement
    per_k_fractions: Tuple[float, ...]
    fitness: Fitness

    @property
    def n_beacons(self) -> int:
        return len(self.beacons)


@dataclass(frozen=True)
class GenerationRecord:
    stage_k: int
    generation: int
    best_fitness: Fitness
    n_beacons: int
    per_k_fractions: Tuple[float, ...]


GenerationCallback = Callable[[GenerationRecord], None]


def _evaluate(problem: PlacementProblem, beacons: BeaconPlacement, current_k: int, k_target: int,
              coverage_threshold: float) -> Tuple[Fitness, Tuple[float, ...]]:
    counts = problem.counts(beacons.sites)
    n_points = max(problem.n_points, 1)
    k_fraction = fraction_at_least(counts, current_k)
    satisfied = float(np.minimum(counts, current_k).sum())
    # whole points only, so equal coverage with similar waste still ties and GDOP decides
    waste = math.floor(sum(problem.waste(site) for site in beacons.sites) + 0.5)
    net = (satisfied - waste) / (current_k * n_points)
    neg_gdop = 0.0
    if current_k == k_target and k_fraction >= 1.0 and problem.has_geometry:
        neg_gdop = -problem.gdop_field(beacons.sites).objective(coverage_threshold)
    per_k = tuple(fraction_at_least(counts, k) for k in range(1, max(REPORTED_K, k_target) + 1))
    return Fitness(k_fraction, net, neg_gdop), per_k


def stage1_fitness(individual: Union[Individual, BeaconPlacement], current_k: int, problem: PlacementProblem,
                   k_target: int = 4, coverage_threshold: float = 1.0) -> Fitness:
    """Score a placement at stage ``current_k``.

    Fields, compared in order: fraction of points with at least ``current_k`` covering
    beacons; capped coverage ``sum(min(count, k)) / (k |D|)`` less the beacons' summed
    footprint outside the drone region, rounded to whole points; and, once the final
    stage is fully covered, the negated GDOP average.
    """
    if not 1 <= current_k <= k_target:
        raise DomainError(f"current_k must be in 1..{k_target}, got {current_k}")
    beacons = individual.beacons if isinstance(individual, Individual) else individual
    fitness, _ = _evaluate(problem, beacons, current_k, k_target, coverage_threshold)
    return fitness


def _site_set(beacons: BeaconPlacement) -> frozenset:
    return frozenset(site.key() for site in beacons.sites)


def select_survivors(scored: Sequence[Individual], s: int) -> List[Individual]:
    """Top ``s`` by fitness; ties go to fewer beacons, then to the earlier entry.

    Placements with the same set of sites count once; repeats are only taken when
    there are fewer than ``s`` distinct placements.
    """
    if s < 1:
        raise DomainError(f"survivor count must be >= 1, got {s}")
    order = sorted(range(len(scored)),
                   key=lambda i: (tuple(-v for v in scored[i].fitness), len(scored[i]), i))
    seen = set()
    distinct: List[int] = []
    repeats: List[int] = []
    for i in order:
        key = _site_set(scored[i].beacons)
        (repeats if key in seen else distinct).append(i)
        seen.add(key)
    chosen = distinct[:s] + repeats[:max(0, s - len(distinct))]
    rank = {i: r for r, i in enumerate(order)}
    return [scored[i] for i in sorted(chosen, key=rank.__getitem__)]


def _fully_covered(problem: PlacementProblem, sites: Sequence[BeaconSite], k: int) -> bool:
    return fraction_at_least(problem.counts(sites), k) >= 1.0


def _replace_pair(problem: PlacementProblem, sites: List[BeaconSite], k: int) -> Optional[List[BeaconSite]]:
    taken = {s.key()[1:] for s in sites}
    entries = problem.bc.entries
    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            rest = [s for idx, s in enumerate(sites) if idx not in (i, j)]
            counts = problem.counts(rest)
            if (counts < k - 1).any():
                continue
            need = counts < k
            for idx in np.flatnonzero(entries[:, need].all(axis=1)):
                site = problem.sites[int(idx)]
                if site.key()[1:] in taken:
                    continue
                if _fully_covered(problem, rest + [site], k):
                    return rest + [site]
    return None


def drop_redundant(problem: PlacementProblem, beacons: BeaconPlacement, k: int) -> BeaconPlacement:
    """Shrink a fully k-covering placement while it stays fully k-covering.

    Single beacons are removed first, the most recently added first. When none can
    go, a pair of beacons is swapped for one grid site that covers every point the
    pair leaves short. Placements without full k-coverage are returned unchanged.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    sites = list(beacons.sites)
    if not _fully_covered(problem, sites, k):
        return beacons
    while True:
        for i in reversed(range(len(sites))):
            trial = sites[:i] + sites[i + 1:]
            if _fully_covered(problem, trial, k):
                sites = trial
                break
        else:
            merged = _replace_pair(problem, sites, k)
            if merged is None:
                break
            sites = merged
    return BeaconPlacement(tuple(sites))


def spawn_offspring(parents: Sequence[Individual], problem: PlacementProblem, population_size: int,
                    rng: np.random.Generator, continuous: bool = False) -> List[BeaconPlacement]:
    """Each parent yields an equal share of ``population_size`` children with one extra beacon.

    A parent's children take their new beacon from the mounting surfaces in turn
    (ceiling, then each wall), so every surface is sampled equally. Child ``o``
    draws from random stream ``o``.
    """
    if not parents:
        raise DomainError("spawn_offspring needs at least one parent")
    surfaces = problem.surfaces()
    share, extra = divmod(population_size, len(parents))
    streams = substreams(rng, population_size)
    n_sites = len(problem.sites)
    children: List[BeaconPlacement] = []
    for p_idx, parent in enumerate(parents):
        count = share + (1 if p_idx < extra else 0)
        for j in range(count):
            stream = streams[len(children)]
            if not continuous and len(parent.beacons) >= n_sites:
                children.append(parent.beacons)
                continue
            site = problem.sample_site(surfaces[j % len(surfaces)], stream, continuous, parent.beacons.sites)
            children.append(BeaconPlacement(parent.beacons.sites + (site,)))
    return children


def _score_all(problem: PlacementProblem, placements: Sequence[BeaconPlacement], current_k: int,
               config: EaConfig) -> List[Individual]:
    def _one(beacons: BeaconPlacement) -> Individual:
        fitness, per_k = _evaluate(problem, beacons, current_k, config.k_target, config.coverage_threshold)
        return Individual(beacons, fitness, per_k)

    workers = min(max_workers(), len(placements))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, placements))
    return [_one(p) for p in placements]


def check_feasible(problem: PlacementProblem, k: int, continuous: bool = False) -> None:
    """Raise ``InfeasibleError`` when some point can never reach ``k`` covering beacons.

    On the grid a point needs ``k`` covering sites, and for ``k >= 4`` on a floor plan
    those sites must not all lie in one plane; off-grid sampling only needs one.
    """
    sums = problem.bc.column_sums()
    bad = np.flatnonzero(sums == 0) if continuous else np.flatnonzero(sums < k)
    if len(bad):
        need = "any" if continuous else f"{k}"
        raise InfeasibleError(f"{len(bad)} of {problem.n_points} drone points cannot be covered by {need} "
                              f"beacon site(s)", uncovered=bad)
    if continuous or k < 4 or not problem.has_geometry:
        return
    flat = np.flatnonzero(~problem.spanning_sites())
    if len(flat):
        raise InfeasibleError(f"{len(flat)} of {problem.n_points} drone points are only heard by beacon sites "
                              "in one plane", uncovered=flat)


def _candidate(ind: Individual) -> CandidatePlacement:
    return CandidatePlacement(ind.beacons, ind.per_k_fractions, ind.fitness)


def _prune(problem: PlacementProblem, parents: Sequence[Individual], current_k: int,
           config: EaConfig) -> List[Individual]:
    pruned = [drop_redundant(problem, p.beacons, current_k) for p in parents]
    saved = sum(len(p) - len(q) for p, q in zip(parents, pruned))
    if not saved:
        return list(parents)
    logger.info(f"Drop pass at k={current_k}: best placement {len(parents[0])} -> {len(pruned[0])} beacons")
    return select_survivors(_score_all(problem, pruned, current_k, config), len(parents))


def run_stage1(problem: PlacementProblem, config: EaConfig = EaConfig(),
               on_generation: Optional[GenerationCallback] = None) -> List[CandidatePlacement]:
    """Find the smallest beacon count giving full k_target-connectivity.

    Returns the surviving placements that share the winner's beacon count and reach
    ``coverage_threshold``; the winner (full coverage) comes first.
    """
    check_feasible(problem, config.k_target, config.continuous)
    rng = np.random.default_rng(config.rng_seed)
    current_k = 1
    stage_generation = 0
    generation = 0
    parents = [Individual(BeaconPlacement(()), Fitness(0.0, 0.0, 0.0), ())]

    while True:
        parents = select_survivors(_score_all(problem, [p.beacons for p in parents], current_k, config),
                                   config.survivor_count_s)
        if parents[0].fitness.k_fraction >= 1.0:
            if current_k == config.k_target:
                break
            if config.drop_pass:
                parents = _prune(problem, parents, current_k, config)
            logger.info(f"Stage k={current_k} done after {stage_generation} generation(s) "
                        f"with {len(parents[0])} beacons")
            current_k += 1
            stage_generation = 0
            continue
        if stage_generation >= config.max_generations:
            best = _candidate(parents[0])
            raise NonConvergenceError(
                f"no {current_k}-connectivity after {stage_generation} generations "
                f"(best fraction {parents[0].fitness.k_fraction:.4f} with {len(parents[0])} beacons)",
                best=best, generations=generation)

        children = spawn_offspring(parents, problem, config.population_size_p, rng, config.continuous)
        pool = _score_all(problem, children, current_k, config) + list(parents)
        parents = select_survivors(pool, config.survivor_count_s)
        generation += 1
        stage_generation += 1
        best = parents[0]
        record = GenerationRecord(current_k, generation, best.fitness, len(best), best.per_k_fractions)
        logger.debug(f"gen {generation} k={current_k}: fraction {best.fitness.k_fraction:.4f}, "
                     f"net {best.fitness.net_coverage:.4f}, {len(best)} beacons")
        if on_generation is not None:
            on_generation(record)

    if config.drop_pass:
        parents = _prune(problem, parents, current_k, config)
    n = min(len(p) for p in parents if p.fitness.k_fraction >= 1.0)
    k_idx = config.k_target - 1
    candidates = [_candidate(p) for p in parents
                  if len(p) == n and p.per_k_fractions[k_idx] >= config.coverage_threshold]
    logger.info(f"Stage 1 finished after {generation} generation(s): {n} beacons, "
                f"{len(candidates)} candidate placement(s)")
    return candidates


__all__ = [
    "EaConfig",
    "Fitness",
    "Individual",
    "CandidatePlacement",
    "GenerationRecord",
    "check_feasible",
    "drop_redundant",
    "run_stage1",
    "spawn_offspring",
    "stage1_fitness",
    "select_survivors",
]
