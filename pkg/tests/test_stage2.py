"""
Stage 2 of the search: crossover, positional mutation and GDOP refinement at a
fixed beacon count.
"""
import numpy as np
import pytest

from beacon_placer.coverage import BeaconPlacement, PlacementProblem
from beacon_placer.errors import DomainError, NonConvergenceError
from beacon_placer.gdop import classify_band
from beacon_placer.geometry import CEILING, WALL_X0, WALL_Y0, site_in_beacon_domain
from beacon_placer.stage1 import CandidatePlacement, EaConfig, Fitness, run_stage1
from beacon_placer.stage2 import Stage2Fitness, crossover, mutate, run_stage2, stage2_fitness

SPREAD = ((0.25, 0.25, 4.0), (2.75, 2.75, 4.0), (0.0, 2.75, 2.25), (2.75, 0.0, 2.25))


def _site(problem, position):
    for site in problem.sites:
        if np.allclose(site.position, position):
            return site
    raise LookupError(position)


def _spread(problem):
    return BeaconPlacement(tuple(_site(problem, p) for p in SPREAD))


def _candidate(problem, placement):
    per_k = problem.per_k_fractions(placement.sites)
    return CandidatePlacement(placement, per_k, Fitness(per_k[3], 1.0, 0.0))


def _keys(placement):
    return sorted(s.key() for s in placement.sites)


def test_fitness_prefers_coverage_then_gdop():
    full_but_poor = Stage2Fitness(1.0, -6.0)
    partial_but_sharp = Stage2Fitness(0.95, -3.0)
    assert full_but_poor > partial_but_sharp
    assert Stage2Fitness(1.0, -3.0) > full_but_poor
    assert full_but_poor.gdop_avg == 6.0


def test_fitness_caps_coverage_at_threshold(omni_problem):
    placement = _spread(omni_problem)
    strict = stage2_fitness(placement, omni_problem)
    relaxed = stage2_fitness(placement, omni_problem, coverage_threshold=0.9)
    assert strict.coverage == 1.0
    assert relaxed.coverage == 0.9


def test_crossover_of_identical_parents(small_problem):
    parent = BeaconPlacement(small_problem.sites[:5])
    child = crossover(parent, parent, np.random.default_rng(0))
    assert _keys(child) == _keys(parent)


def test_crossover_single_gene(small_problem):
    a = BeaconPlacement(small_problem.sites[:1])
    b = BeaconPlacement(small_problem.sites[1:2])
    for seed in range(10):
        child = crossover(a, b, np.random.default_rng(seed))
        assert _keys(child) in (_keys(a), _keys(b))


def test_crossover_keeps_size_and_parent_genes(small_problem):
    sites = small_problem.sites
    a = BeaconPlacement(sites[:4])
    b = BeaconPlacement(sites[2:6])
    genes = {s.key() for s in sites[:6]}
    for seed in range(20):
        child = crossover(a, b, np.random.default_rng(seed))
        assert len(child) == 4
        assert {s.key() for s in child.sites} <= genes


def test_crossover_is_deterministic(small_problem):
    sites = small_problem.sites
    a = BeaconPlacement(sites[:4])
    b = BeaconPlacement(sites[40:44])
    first = crossover(a, b, np.random.default_rng(12))
    second = crossover(a, b, np.random.default_rng(12))
    assert _keys(first) == _keys(second)


def test_crossover_size_mismatch(small_problem):
    with pytest.raises(DomainError):
        crossover(BeaconPlacement(small_problem.sites[:2]), BeaconPlacement(small_problem.sites[:3]),
                  np.random.default_rng(0))


def test_mutation_moves_along_surface(small_problem):
    placement = _spread(small_problem)
    rng = np.random.default_rng(6)
    for _ in range(50):
        placement = mutate(placement, small_problem, rng)
        assert len(placement) == 4
        for site in placement.sites:
            assert site_in_beacon_domain(small_problem.plan, site)
            assert small_problem.site_index(site) is not None
    assert {s.surface for s in placement.sites} == {CEILING, WALL_X0, WALL_Y0}


def test_continuous_mutation_stays_legal(small_problem):
    placement = _spread(small_problem)
    rng = np.random.default_rng(7)
    for _ in range(50):
        placement = mutate(placement, small_problem, rng, continuous=True)
        assert len(placement) == 4
        assert all(site_in_beacon_domain(small_problem.plan, s) for s in placement.sites)


def test_goal_already_met_needs_no_generations(omni_problem):
    placement = _spread(omni_problem)
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1e5)
    final = run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
    assert final.generations == 0
    assert _keys(final.beacons) == _keys(placement)
    assert final.per_k_fractions[3] == 1.0


def test_unreachable_gdop_reports_best(omni_problem):
    placement = _spread(omni_problem)
    start = omni_problem.gdop_field(placement.sites).average
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1.0, max_generations=3)
    with pytest.raises(NonConvergenceError) as exc:
        run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
    best = exc.value.best
    assert exc.value.generations == 3
    assert best.n_beacons == 4
    assert best.gdop_avg <= start


def test_refinement_keeps_count_and_never_worsens(omni_problem):
    placement = _spread(omni_problem)
    start = omni_problem.gdop_field(placement.sites).average
    goal = start * 0.999
    config = EaConfig(population_size_p=10, survivor_count_s=5, gdop_threshold_g=goal, rng_seed=4,
                      max_generations=200)
    final = run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
    assert final.n_beacons == 4
    assert final.gdop_avg <= goal
    assert final.per_k_fractions[3] == 1.0


def test_without_mutation_crossover_only(omni_problem):
    a = _spread(omni_problem)
    b = BeaconPlacement(omni_problem.sites[:2] + omni_problem.sites[40:42])
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1.0, max_generations=2,
                      mutation=False)
    with pytest.raises(NonConvergenceError) as exc:
        run_stage2([_candidate(omni_problem, a), _candidate(omni_problem, b)], omni_problem, config)
    genes = {s.key() for s in a.sites} | {s.key() for s in b.sites}
    assert {s.key() for s in exc.value.best.beacons.sites} <= genes


def test_same_seed_same_refinement(omni_problem):
    placement = _spread(omni_problem)
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1.0, max_generations=4,
                      rng_seed=9)
    results = []
    for _ in range(2):
        with pytest.raises(NonConvergenceError) as exc:
            run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
        results.append(_keys(exc.value.best.beacons))
    assert results[0] == results[1]


def test_rejects_bad_candidate_lists(omni_problem):
    with pytest.raises(DomainError):
        run_stage2([], omni_problem)
    three = BeaconPlacement(omni_problem.sites[:3])
    with pytest.raises(DomainError):
        run_stage2([_candidate(omni_problem, _spread(omni_problem)), _candidate(omni_problem, three)],
                   omni_problem)
    synthetic = PlacementProblem.from_matrix(np.ones((4, 2), dtype=bool))
    with pytest.raises(DomainError):
        run_stage2([_candidate(synthetic, BeaconPlacement(synthetic.sites))], synthetic)


def test_final_placement_reports_objective_and_band(omni_problem):
    placement = _spread(omni_problem)
    field = omni_problem.gdop_field(placement.sites)
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1e5)
    final = run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
    assert final.gdop_objective == final.gdop_avg == field.average
    assert final.covered_gdop_avg == field.covered_average
    assert final.target_band_met


def test_relaxed_objective_is_covered_average(small_problem):
    ceiling = [small_problem.sites[i] for i in small_problem.beacon_domain.by_surface[CEILING]]
    walls = [s for s in small_problem.sites if s.surface == WALL_X0]
    placement = BeaconPlacement((ceiling[0], ceiling[35], walls[0], walls[-1]))
    config = EaConfig(population_size_p=5, survivor_count_s=5, coverage_threshold=0.01,
                      gdop_threshold_g=1e5)
    final = run_stage2([_candidate(small_problem, placement)], small_problem, config)
    assert final.gdop_objective == final.covered_gdop_avg
    assert final.gdop_objective <= final.gdop_avg
    assert final.band is classify_band(final.gdop_objective)


def test_band_target_not_met(omni_problem):
    placement = _spread(omni_problem)
    config = EaConfig(population_size_p=5, survivor_count_s=5, gdop_threshold_g=1.0, max_generations=1)
    with pytest.raises(NonConvergenceError) as exc:
        run_stage2([_candidate(omni_problem, placement)], omni_problem, config)
    best = exc.value.best
    assert best.gdop_objective > 1.0
    assert not best.target_band_met


@pytest.mark.slow
def test_relaxed_reference_room_reaches_good_geometry(small_room):
    problem = PlacementProblem.build(small_room)
    config = EaConfig(coverage_threshold=0.96, gdop_threshold_g=5.0, rng_seed=0)
    final = run_stage2(run_stage1(problem, config), problem, config)
    assert final.per_k_fractions[3] >= 0.96
    assert final.gdop_objective <= 5.0
    assert final.target_band_met
