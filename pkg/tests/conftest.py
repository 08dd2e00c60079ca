import json
import os
import sys
import tempfile
from pathlib import Path

import pytest

# Ensure project root (containing beacon_placer/) is importable when running pytest
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from beacon_placer.coverage import PlacementProblem  # noqa: E402
from beacon_placer.geometry import Box, FloorPlan, SensorModel  # noqa: E402

PLANS_DIR = Path(ROOT) / 'plans'

AXES = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0),
        (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0))


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='also run the full-resolution search tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-resolution searches, run with --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def _write_plan(path: Path, room=(3, 3, 4), obstacles=(), resolution=0.5, **extra) -> Path:
    doc = {
        'schema_version': 1,
        'name': path.stem,
        'room': list(room),
        'obstacles': [{'min': list(lo), 'max': list(hi)} for lo, hi in obstacles],
    }
    if resolution is not None:
        doc['resolution'] = {'drone_m': resolution, 'beacon_m': resolution}
    doc.update(extra)
    path.write_text(json.dumps(doc, indent=2))
    return path


@pytest.fixture
def tmp_outdir() -> Path:
    return Path(tempfile.mkdtemp(prefix='bp_out_'))


@pytest.fixture
def plan_writer(tmp_outdir):
    def _make(name='room.json', **kwargs) -> Path:
        return _write_plan(tmp_outdir / name, **kwargs)
    return _make


@pytest.fixture
def small_room() -> FloorPlan:
    return FloorPlan(Box((0, 0, 0), (3, 3, 4)))


@pytest.fixture
def cube_obstacle_room() -> FloorPlan:
    return FloorPlan(Box((0, 0, 0), (3, 3, 4)), (Box((1, 1, 1), (2, 2, 2)),))


@pytest.fixture(scope='session')
def omni_model() -> SensorModel:
    # six wide cones along the axes hear every direction
    return SensorModel(100.0, 60.0, AXES)


@pytest.fixture(scope='session')
def small_problem() -> PlacementProblem:
    """3 x 3 x 4 room at 0.5 m: |D| = 144, |B| = 132."""
    return PlacementProblem.build(FloorPlan(Box((0, 0, 0), (3, 3, 4))), SensorModel(), 0.5, 0.5)


@pytest.fixture(scope='session')
def omni_problem(omni_model) -> PlacementProblem:
    return PlacementProblem.build(FloorPlan(Box((0, 0, 0), (3, 3, 4))), omni_model, 0.5, 0.5)


@pytest.fixture(scope='session')
def closet_problem() -> PlacementProblem:
    """1 x 1 x 2 room at 0.5 m: 8 drone points, 20 sites, every site hears every point."""
    return PlacementProblem.build(FloorPlan(Box((0, 0, 0), (1, 1, 2))), SensorModel(), 0.5, 0.5)


@pytest.fixture
def hand_bc():
    # 5 sites x 2 points; point 0 heard by 3 sites, point 1 by all 5
    return [
        [True, True],
        [True, True],
        [True, True],
        [False, True],
        [False, True],
    ]


@pytest.fixture
def pocket_obstacles():
    """Closed shell around x, y in (1, 2), z in (2.5, 3.5): the drone points inside see no site."""
    return (
        ((0.9, 0.9, 2.4), (1.0, 2.1, 3.6)),
        ((2.0, 0.9, 2.4), (2.1, 2.1, 3.6)),
        ((0.9, 0.9, 2.4), (2.1, 1.0, 3.6)),
        ((0.9, 2.0, 2.4), (2.1, 2.1, 3.6)),
        ((0.9, 0.9, 2.4), (2.1, 2.1, 2.5)),
        ((0.9, 0.9, 3.5), (2.1, 2.1, 3.6)),
    )
