"""
Time-of-arrival ranging and the closed-form trilateration solver.
"""
import numpy as np
import pytest

from beacon_placer.errors import DegenerateGeometryError, DomainError
from beacon_placer.localization import (
    LinearTrilaterator,
    TrilaterationProblem,
    anchors_span_space,
    build_linear_system,
    range_from_toa,
    trilaterate,
)

CORNER_BEACONS = [(0, 0, 0), (3, 0, 0), (0, 3, 0), (0, 0, 4)]


def _ranges(positions, target):
    return np.linalg.norm(np.asarray(positions, dtype=float) - np.asarray(target, dtype=float), axis=1)


def test_range_from_toa():
    assert range_from_toa(0.0) == 0.0
    assert range_from_toa(0.01) == pytest.approx(3.43)
    assert range_from_toa(0.01, speed_of_sound_mps=340.0) == pytest.approx(3.4)


def test_range_from_toa_rejects_negative_time():
    with pytest.raises(DomainError):
        range_from_toa(-1e-3)


def test_trilaterate_exact_ranges():
    target = (1.0, 1.0, 1.0)
    problem = TrilaterationProblem.from_ranges(CORNER_BEACONS, _ranges(CORNER_BEACONS, target))
    assert np.allclose(trilaterate(problem), target, atol=1e-9)


def test_coplanar_beacons_are_degenerate():
    beacons = [(0, 0, 4), (3, 0, 4), (0, 3, 4), (3, 3, 4)]
    problem = TrilaterationProblem.from_ranges(beacons, _ranges(beacons, (1.0, 1.0, 2.0)))
    with pytest.raises(DegenerateGeometryError):
        trilaterate(problem)


def test_needs_four_measurements():
    with pytest.raises(DomainError):
        TrilaterationProblem.from_ranges(CORNER_BEACONS[:3], [1.0, 1.0, 1.0])


def test_linear_system_references_last_beacon():
    A, b = build_linear_system(np.array(CORNER_BEACONS, dtype=float), _ranges(CORNER_BEACONS, (1, 1, 1)))
    assert A.shape == (3, 3)
    assert np.allclose(A @ np.array([1.0, 1.0, 1.0]), b)


def test_equal_weights_match_unweighted():
    target = (0.7, 2.1, 1.3)
    d = _ranges(CORNER_BEACONS, target)
    plain = trilaterate(TrilaterationProblem.from_ranges(CORNER_BEACONS, d))
    weighted = trilaterate(TrilaterationProblem.from_ranges(CORNER_BEACONS, d, [5.0] * 4))
    assert np.allclose(plain, weighted, atol=1e-12)


def test_solution_independent_of_reference_beacon():
    beacons = [(0, 0, 4), (3, 0, 3.5), (0, 3, 2.5), (3, 3, 4), (1.5, 0, 3)]
    target = (1.2, 1.7, 2.6)
    d = _ranges(beacons, target)
    for shift in range(len(beacons)):
        order = beacons[shift:] + beacons[:shift]
        est = trilaterate(TrilaterationProblem.from_ranges(order, np.roll(d, -shift)))
        assert np.allclose(est, target, atol=1e-9)


def test_translation_moves_solution():
    offset = np.array([10.0, -4.0, 2.5])
    target = np.array([1.0, 2.0, 0.5])
    moved = [tuple(np.asarray(p) + offset) for p in CORNER_BEACONS]
    est = trilaterate(TrilaterationProblem.from_ranges(moved, _ranges(moved, target + offset)))
    assert np.allclose(est, target + offset, atol=1e-9)


def test_random_geometries_recover_exact_position():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(1000):
        n = int(rng.integers(4, 9))
        beacons = rng.uniform(0.0, 5.0, (n, 3))
        target = rng.uniform(0.0, 5.0, 3)
        A, _ = build_linear_system(beacons, np.zeros(n))
        if np.linalg.cond(A) > 1e4:
            continue
        est = trilaterate(TrilaterationProblem.from_ranges(beacons, _ranges(beacons, target)))
        assert np.allclose(est, target, atol=1e-9)
        checked += 1
    assert checked > 700


def test_batch_solve_matches_single_solves():
    solver = LinearTrilaterator(np.array(CORNER_BEACONS, dtype=float))
    targets = np.array([[1.0, 1.0, 1.0], [0.5, 2.0, 3.0], [2.0, 0.2, 0.9]])
    d = np.stack([_ranges(CORNER_BEACONS, t) for t in targets], axis=1)
    batch = solver.solve(d)
    assert batch.shape == (3, 3)
    for j, t in enumerate(targets):
        assert np.allclose(batch[:, j], t, atol=1e-9)


def test_anchor_spread_per_point():
    positions = np.array([(0, 0, 4), (3, 0, 4), (0, 3, 4), (3, 3, 4), (0, 1.5, 2.5)], dtype=float)
    masks = np.array([
        [1, 1, 1, 1],
        [1, 1, 1, 0],
        [1, 1, 1, 1],
        [1, 1, 0, 1],
        [0, 1, 0, 1],
    ], dtype=bool)
    # ceiling only / ceiling and wall / three anchors / three ceiling and wall
    assert anchors_span_space(masks, positions).tolist() == [False, True, False, True]


def test_anchor_spread_matches_solver():
    rng = np.random.default_rng(17)
    for _ in range(200):
        n = int(rng.integers(4, 8))
        beacons = rng.uniform(0.0, 5.0, (n, 3))
        if rng.random() < 0.3:
            beacons[:, 2] = 4.0
        spans = bool(anchors_span_space(np.ones((n, 1), dtype=bool), beacons)[0])
        try:
            LinearTrilaterator(beacons)
            solvable = True
        except DegenerateGeometryError:
            solvable = False
        assert spans == solvable
