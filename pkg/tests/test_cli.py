"""
End-to-end tests of the beaconplacer command line.
"""
import json

import pytest

from beacon_placer.__main__ import (
    EXIT_INFEASIBLE,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION_FAILED,
    _config,
    build_parser,
    main,
)

from conftest import _write_plan

FAST = ['--population', '50', '--survivors', '5', '--seed', '1', '--gdop-threshold', '1000']


@pytest.fixture(scope='module')
def solved(tmp_path_factory):
    outdir = tmp_path_factory.mktemp('solve')
    plan = _write_plan(outdir / 'room.json')
    out = outdir / 'room.placement.json'
    code = main(['solve', str(plan), '-o', str(out)] + FAST)
    return code, plan, out


@pytest.fixture
def closet_plan(plan_writer):
    return plan_writer('closet.json', room=(1, 1, 2))


def _tampered(src, dst, edit):
    doc = json.loads(src.read_text())
    edit(doc)
    dst.write_text(json.dumps(doc, indent=2))
    return dst


def test_solve_writes_placement(solved):
    code, _, out = solved
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc['schema_version'] == 1
    assert doc['plan'] == 'room'
    meta = doc['metadata']
    assert meta['n_beacons'] == len(doc['beacons'])
    assert meta['n_beacons'] >= 4
    assert meta['per_k_fractions'][3] == 1.0
    assert meta['resolution'] == {'drone_m': 0.5, 'beacon_m': 0.5}
    assert meta['provenance']['tool'] == 'beaconplacer'
    assert set(doc['timing']) == {'created', 'wall_clock_s'}
    assert meta['gdop_objective'] == meta['gdop_avg']
    assert meta['target_band_met'] is True


def test_solve_is_reproducible(solved, tmp_outdir):
    _, plan, out = solved
    again = tmp_outdir / 'again.placement.json'
    assert main(['solve', str(plan), '-o', str(again)] + FAST) == EXIT_OK
    first = json.loads(out.read_text())
    second = json.loads(again.read_text())
    first.pop('timing')
    second.pop('timing')
    assert first == second


def test_solve_default_output_next_to_plan(closet_plan, capsys):
    assert main(['solve', str(closet_plan), '--population', '20', '--gdop-threshold', '1000']) == EXIT_OK
    assert closet_plan.with_name('closet.placement.json').exists()
    lines = capsys.readouterr().out.splitlines()
    assert any(line.split() == ['Beacons:', '4'] for line in lines)


def test_validate_passes_untouched_file(solved, capsys):
    _, plan, out = solved
    assert main(['validate', str(plan), str(out)]) == EXIT_OK
    assert 'PASS' in capsys.readouterr().out


def test_validate_detects_tampered_gdop(solved, tmp_outdir, capsys):
    _, plan, out = solved

    def bump(doc):
        doc['metadata']['gdop_avg'] += 1.0

    bad = _tampered(out, tmp_outdir / 'bad.placement.json', bump)
    assert main(['validate', str(plan), str(bad)]) == EXIT_VALIDATION_FAILED
    text = capsys.readouterr().out
    assert 'FAIL' in text
    assert 'gdop_avg' in text


def test_solve_labels_gdop_objective(closet_plan, capsys):
    args = ['solve', str(closet_plan), '--population', '20', '--gdop-threshold', '1000',
            '--coverage-threshold', '0.9']
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    objective = next(line for line in lines if line.startswith('GDOP objective:'))
    assert 'target 1000, covered points' in objective
    band = next(line for line in lines if line.startswith('Band:'))
    assert '(target: Bad or better, met)' in band
    doc = json.loads(closet_plan.with_name('closet.placement.json').read_text())
    assert doc['metadata']['gdop_objective'] == doc['metadata']['covered_gdop_avg']


def test_validate_detects_tampered_objective(solved, tmp_outdir, capsys):
    _, plan, out = solved

    def bump(doc):
        doc['metadata']['gdop_objective'] *= 2.0

    bad = _tampered(out, tmp_outdir / 'objective.placement.json', bump)
    assert main(['validate', str(plan), str(bad)]) == EXIT_VALIDATION_FAILED
    assert 'gdop_objective' in capsys.readouterr().out


def test_drop_pass_flag():
    parser = build_parser()
    assert _config(parser.parse_args(['solve', 'p.json'])).drop_pass is True
    assert _config(parser.parse_args(['solve', 'p.json', '--no-drop-pass'])).drop_pass is False


def test_validate_detects_low_wall_beacon(solved, tmp_outdir, capsys):
    _, plan, out = solved

    def lower(doc):
        doc['beacons'][0] = {'position': [0.0, 1.25, 0.5], 'normal': [1.0, 0.0, 0.0], 'surface': 'wall_x0'}

    bad = _tampered(out, tmp_outdir / 'low.placement.json', lower)
    assert main(['validate', str(plan), str(bad)]) == EXIT_VALIDATION_FAILED
    assert 'beacon-domain' in capsys.readouterr().out


def test_gdop_map_outputs(solved, tmp_outdir):
    _, plan, out = solved
    csv_path = tmp_outdir / 'map.csv'
    pgm_path = tmp_outdir / 'map.pgm'
    assert main(['gdop-map', str(plan), str(out), '--csv', str(csv_path), '--image', str(pgm_path)]) == EXIT_OK
    lines = csv_path.read_text().splitlines()
    assert lines[0] == 'x,y,z,gdop,band'
    assert len(lines) == 145
    header = b'P5\n6 6\n255\n'
    data = pgm_path.read_bytes()
    assert data.startswith(header)
    assert len(data) == len(header) + 36


def test_gdop_map_of_empty_placement_is_all_bad(plan_writer, tmp_outdir):
    plan = plan_writer('room.json')
    empty = tmp_outdir / 'empty.placement.json'
    empty.write_text(json.dumps({'schema_version': 1, 'beacons': []}))
    csv_path = tmp_outdir / 'empty.csv'
    assert main(['gdop-map', str(plan), str(empty), '--csv', str(csv_path),
                 '--image', str(tmp_outdir / 'empty.pgm')]) == EXIT_OK
    rows = csv_path.read_text().splitlines()[1:]
    assert rows
    assert all(row.endswith(',Bad') for row in rows)


SPREAD_BEACONS = [
    {'position': [0.25, 0.25, 4.0], 'normal': [0.0, 0.0, -1.0], 'surface': 'ceiling'},
    {'position': [2.75, 2.75, 4.0], 'normal': [0.0, 0.0, -1.0], 'surface': 'ceiling'},
    {'position': [0.0, 2.75, 2.25], 'normal': [1.0, 0.0, 0.0], 'surface': 'wall_x0'},
    {'position': [2.75, 0.0, 2.25], 'normal': [0.0, 1.0, 0.0], 'surface': 'wall_y0'},
]


def test_simulate_writes_report(plan_writer, tmp_outdir, capsys):
    plan = plan_writer('room.json')
    placement = tmp_outdir / 'spread.placement.json'
    placement.write_text(json.dumps({'schema_version': 1, 'beacons': SPREAD_BEACONS}))
    report = tmp_outdir / 'sim.csv'
    code = main(['simulate', str(plan), str(placement), '--points', '3', '--trials', '200', '-o', str(report)])
    assert code == EXIT_OK
    lines = report.read_text().splitlines()
    assert lines[0] == 'x,y,z,gdop,predicted_sigma,rmse,ratio,trials'
    assert len(lines) == 4
    assert 'median' in capsys.readouterr().out


def test_simulate_needs_non_coplanar_beacons(plan_writer, tmp_outdir, capsys):
    plan = plan_writer('room.json')
    ceiling_only = [{'position': [x, y, 4.0], 'normal': [0.0, 0.0, -1.0], 'surface': 'ceiling'}
                    for x in (0.75, 2.25) for y in (0.75, 2.25)]
    placement = tmp_outdir / 'flat.placement.json'
    placement.write_text(json.dumps({'schema_version': 1, 'beacons': ceiling_only}))
    assert main(['simulate', str(plan), str(placement), '--trials', '10']) == EXIT_USAGE
    assert 'common plane' in capsys.readouterr().err


def test_bounds_on_small_instance(closet_plan, capsys):
    assert main(['bounds', str(closet_plan)]) == EXIT_OK
    text = capsys.readouterr().out
    assert 'Lower bound:     4' in text
    assert 'Exact optimum:   4' in text


def test_bounds_skips_exhaustive_search_on_large_instance(plan_writer, capsys):
    plan = plan_writer('room.json')
    assert main(['bounds', str(plan)]) == EXIT_OK
    assert 'skipped' in capsys.readouterr().out


def test_unreachable_pocket_is_infeasible(plan_writer, pocket_obstacles, capsys):
    plan = plan_writer('pocket.json', obstacles=pocket_obstacles)
    assert main(['solve', str(plan)] + FAST) == EXIT_INFEASIBLE
    assert 'Infeasible' in capsys.readouterr().err


def test_generation_limit_exit_code(closet_plan, capsys):
    args = ['solve', str(closet_plan), '--population', '20', '--gdop-threshold', '1.0', '--max-generations', '2']
    assert main(args) == EXIT_NOT_CONVERGED
    assert 'Did not converge' in capsys.readouterr().err


def test_malformed_plan(tmp_outdir, capsys):
    plan = tmp_outdir / 'broken.json'
    plan.write_text('{\n  "room": [3, 3, 4],\n}')
    assert main(['bounds', str(plan)]) == EXIT_USAGE
    assert 'broken.json:3' in capsys.readouterr().err


def test_missing_plan_file(tmp_outdir):
    assert main(['bounds', str(tmp_outdir / 'nope.json')]) == EXIT_USAGE


def test_bad_seed_is_a_usage_error(closet_plan):
    assert main(['solve', str(closet_plan), '--seed', '-1']) == EXIT_USAGE


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(['solve']) == EXIT_USAGE


def test_version(capsys):
    assert main(['--version']) == EXIT_OK
    assert 'BeaconPlacer' in capsys.readouterr().out


def test_relaxed_coverage_lowers_default_gdop_goal():
    parser = build_parser()
    assert _config(parser.parse_args(['solve', 'p.json'])).gdop_threshold_g == 20.0
    assert _config(parser.parse_args(['solve', 'p.json', '--coverage-threshold', '0.95'])).gdop_threshold_g == 5.0
    relaxed = parser.parse_args(['solve', 'p.json', '--coverage-threshold', '0.95', '--gdop-threshold', '8'])
    assert _config(relaxed).gdop_threshold_g == 8.0


def test_log_file(closet_plan, tmp_outdir):
    log = tmp_outdir / 'run.log'
    assert main(['bounds', str(closet_plan), '-v', '--log-file', str(log)]) == EXIT_OK
    assert 'INFO: Placement problem' in log.read_text()
