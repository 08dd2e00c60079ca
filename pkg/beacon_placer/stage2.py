"""Stage 2: rearrange a fixed number of beacons until the GDOP average drops below g.

Survivors are sorted by fitness; each adjacent pair produces one child by uniform
crossover and mutated copies of the best individual fill the brood back up to
the survivor count. Parents and children compete for the next generation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np

from .coverage import BeaconPlacement, PlacementProblem, fraction_at_least
from .errors import DomainError, NonConvergenceError
from .gdop import Band, classify_band, within_target_band
from .geometry import BeaconSite, site_in_beacon_domain, surface_bounds
from .stage1 import REPORTED_K, CandidatePlacement, EaConfig
from .utils import substreams

logger = logging.getLogger(__name__)

MIN_BEACONS_FOR_GDOP = 4


class Stage2Fitness(NamedTuple):
    """Larger is better: capped 4-connectivity fraction, then negated GDOP average."""

    coverage: float
    neg_gdop: float

    @property
    def gdop_avg(self) -> float:
        return -self.neg_gdop


@dataclass(frozen=True)
class ScoredPlacement:
    beacons: BeaconPlacement
    fitness: Stage2Fitness
    per_k_fractions: Tuple[float, ...]
    gdop_avg: float

    def __len__(self) -> int:
        return len(self.beacons)


@dataclass(frozen=True)
class FinalPlacement:
    """Stage 2 result.

    ``gdop_objective`` is the value compared with g: ``gdop_avg`` over all points
    under strict coverage, ``covered_gdop_avg`` when coverage is relaxed. ``band``
    classifies the objective.
    """

    beacons: BeaconPlacement
    per_k_fractions: Tuple[float, ...]
    gdop_avg: float
    covered_gdop_avg: float
    gdop_objective: float
    band: Band
    target_band_met: bool
    generations: int
    alternatives: Tuple[ScoredPlacement, ...] = ()

    @property
    def n_beacons(self) -> int:
        return len(self.beacons)


def _score(problem: PlacementProblem, beacons: BeaconPlacement, coverage_threshold: float) -> ScoredPlacement:
    counts = problem.counts(beacons.sites)
    per_k = tuple(fraction_at_least(counts, k) for k in range(1, REPORTED_K + 1))
    gdop_avg = problem.gdop_field(beacons.sites).objective(coverage_threshold)
    fitness = Stage2Fitness(min(per_k[MIN_BEACONS_FOR_GDOP - 1], coverage_threshold), -gdop_avg)
    return ScoredPlacement(beacons, fitness, per_k, gdop_avg)


def stage2_fitness(placement: BeaconPlacement, problem: PlacementProblem,
                   coverage_threshold: float = 1.0) -> Stage2Fitness:
    """4-connectivity fraction (capped at ``coverage_threshold``), then lower GDOP average.

    Once a placement meets the coverage threshold, extra coverage no longer ranks it
    above a placement with better geometry.
    """
    return _score(problem, placement, coverage_threshold).fitness


def _rank(pool: Sequence[ScoredPlacement]) -> List[ScoredPlacement]:
    order = sorted(range(len(pool)), key=lambda i: (tuple(-v for v in pool[i].fitness), i))
    return [pool[i] for i in order]


def _position_order(placement: BeaconPlacement) -> List[BeaconSite]:
    return sorted(placement.sites, key=lambda s: (s.position, s.surface))


def crossover(parent_a: BeaconPlacement, parent_b: BeaconPlacement, rng: np.random.Generator) -> BeaconPlacement:
    """Uniform crossover over the position-sorted beacon lists.

    If the chosen gene is already in the child, the other parent's gene is used;
    if that is taken too, any unused beacon from either parent fills the slot.
    """
    if len(parent_a) != len(parent_b):
        raise DomainError(f"parents differ in size ({len(parent_a)} vs {len(parent_b)})")
    genes_a = _position_order(parent_a)
    genes_b = _position_order(parent_b)
    picks = rng.random(len(genes_a)) < 0.5
    child: List[BeaconSite] = []
    used = set()
    for i, take_a in enumerate(picks):
        first, second = (genes_a[i], genes_b[i]) if take_a else (genes_b[i], genes_a[i])
        gene = first if first.key() not in used else second
        if gene.key() in used:
            gene = next(g for g in genes_a + genes_b if g.key() not in used)
        used.add(gene.key())
        child.append(gene)
    return BeaconPlacement(tuple(child))


def mutate(placement: BeaconPlacement, problem: PlacementProblem, rng: np.random.Generator,
           continuous: bool = False) -> BeaconPlacement:
    """Move one beacon by a Gaussian step of one grid cell along its surface.

    The new position is clamped to the surface and, on the grid, snapped to the
    nearest site. A move onto an occupied or illegal spot leaves the placement unchanged.
    """
    if len(placement) == 0:
        return placement
    sites = list(placement.sites)
    idx = int(rng.integers(len(sites)))
    site = sites[idx]
    normal = np.asarray(site.normal)
    step = rng.normal(0.0, problem.resolution_m, 3)
    step -= np.dot(step, normal) * normal
    lo, hi = surface_bounds(problem.plan, site.surface)
    moved = site.moved_to(tuple(float(v) for v in np.clip(np.asarray(site.position) + step, lo, hi)))
    if not continuous:
        moved = problem.snap(moved)
    elif not site_in_beacon_domain(problem.plan, moved):
        return placement
    if any(moved.key()[1:] == s.key()[1:] for i, s in enumerate(sites) if i != idx):
        return placement
    sites[idx] = moved
    return BeaconPlacement(tuple(sites))


def _goal_met(scored: ScoredPlacement, config: EaConfig) -> bool:
    return (scored.per_k_fractions[MIN_BEACONS_FOR_GDOP - 1] >= config.coverage_threshold
            and scored.gdop_avg <= config.gdop_threshold_g)


def _final(best: ScoredPlacement, survivors: Sequence[ScoredPlacement], problem: PlacementProblem,
           config: EaConfig, generations: int) -> FinalPlacement:
    field = problem.gdop_field(best.beacons.sites)
    return FinalPlacement(best.beacons, best.per_k_fractions, field.average, field.covered_average,
                          best.gdop_avg, classify_band(best.gdop_avg),
                          within_target_band(best.gdop_avg, config.gdop_threshold_g), generations,
                          tuple(s for s in survivors if s is not best))


def run_stage2(candidates: Sequence[CandidatePlacement], problem: PlacementProblem,
               config: EaConfig = EaConfig()) -> FinalPlacement:
    """Improve GDOP at constant beacon count until coverage and GDOP goals both hold."""
    if not candidates:
        raise DomainError("run_stage2 needs at least one candidate placement")
    sizes = {c.n_beacons for c in candidates}
    if len(sizes) != 1:
        raise DomainError(f"candidates differ in beacon count: {sorted(sizes)}")
    if not problem.has_geometry:
        raise DomainError("GDOP refinement needs a floor plan")

    rng = np.random.default_rng([config.rng_seed, 2])
    population = _rank([_score(problem, c.beacons, config.coverage_threshold) for c in candidates])
    brood = config.survivor_count_s
    generation = 0
    logger.info(f"Stage 2 start: {sizes.pop()} beacons, GDOP objective {population[0].gdop_avg:.3f}")

    while not _goal_met(population[0], config):
        if generation >= config.max_generations:
            best = _final(population[0], population, problem, config, generation)
            raise NonConvergenceError(
                f"GDOP objective {population[0].gdop_avg:.3f} > {config.gdop_threshold_g} or 4-connectivity "
                f"{population[0].per_k_fractions[MIN_BEACONS_FOR_GDOP - 1]:.4f} < {config.coverage_threshold} "
                f"after {generation} generations", best=best, generations=generation)

        streams = substreams(rng, brood + 1)
        children: List[BeaconPlacement] = []
        for i in range(len(population) - 1):
            if len(children) >= brood - 1:
                break
            children.append(crossover(population[i].beacons, population[i + 1].beacons, streams[i]))
        while len(children) < brood:
            stream = streams[len(children)]
            if config.mutation:
                children.append(mutate(population[0].beacons, problem, stream, config.continuous))
            elif len(population) > 1:
                mate = population[1 + len(children) % (len(population) - 1)]
                children.append(crossover(population[0].beacons, mate.beacons, stream))
            else:
                children.append(population[0].beacons)
        if config.mutation and config.mutation_rate > 0:
            tail = streams[brood]
            for i in range(len(children)):
                if tail.random() < config.mutation_rate:
                    children[i] = mutate(children[i], problem, tail, config.continuous)

        pool = [_score(problem, c, config.coverage_threshold) for c in children] + list(population)
        population = _rank(pool)[:brood]
        generation += 1
        logger.debug(f"stage 2 gen {generation}: GDOP objective {population[0].gdop_avg:.3f}, "
                     f"4-connectivity {population[0].per_k_fractions[MIN_BEACONS_FOR_GDOP - 1]:.4f}")

    logger.info(f"Stage 2 finished after {generation} generation(s): GDOP objective {population[0].gdop_avg:.3f}")
    return _final(population[0], population, problem, config, generation)


__all__ = [
    "Stage2Fitness",
    "ScoredPlacement",
    "FinalPlacement",
    "crossover",
    "mutate",
    "stage2_fitness",
    "run_stage2",
]
