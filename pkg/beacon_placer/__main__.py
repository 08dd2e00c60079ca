"""Command-line entry point for BeaconPlacer.

Subcommands: solve, gdop-map, simulate, bounds, validate.

Exit codes: 0 success, 1 validation mismatch, 2 usage / input error,
3 infeasible instance, 4 search did not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from .__version__ import __version__
from .coverage import PlacementProblem
from .documents import (
    build_placement_document,
    check_plan_matches,
    read_placement,
    validate_placement,
    write_gdop_csv,
    write_gdop_pgm,
    write_placement,
    write_simulation_csv,
)
from .errors import (
    BeaconPlacerError,
    CoverageError,
    InfeasibleError,
    NonConvergenceError,
)
from .gdop import classify_band
from .geometry import DEFAULT_RESOLUTION_M, PlanDocument, SensorModel, load_plan_document
from .oracle_sim import (
    DEFAULT_MAX_SITES,
    brute_force_min_cover,
    counting_bound,
    lp_bound,
    simulate_localization,
    solvable_points,
)
from .stage1 import EaConfig, GenerationRecord, run_stage1
from .stage2 import run_stage2

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

STRICT_GDOP_THRESHOLD = 20.0
RELAXED_GDOP_THRESHOLD = 5.0


def _configure_logging(verbosity: int, log_file: Optional[str]) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level, format='%(levelname)s: %(message)s', handlers=handlers, force=True)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("--drone-res", type=float, help="drone-domain grid spacing in metres")
    common.add_argument("--beacon-res", type=float, help="beacon-domain grid spacing in metres")
    common.add_argument("--population", type=int, default=250, help="offspring per generation P (default: 250)")
    common.add_argument("--survivors", type=int, default=5, help="survivors per generation S (default: 5)")
    common.add_argument("--k", type=int, default=4, help="required connectivity (default: 4)")
    common.add_argument("--coverage-threshold", type=float, default=1.0,
                        help="required 4-connectivity fraction (default: 1.0)")
    common.add_argument("--gdop-threshold", type=float,
                        help="target GDOP_avg g (default: 20, or 5 when coverage is relaxed)")
    common.add_argument("--max-generations", type=int, default=500,
                        help="generation limit per stage (default: 500)")
    common.add_argument("--continuous", action="store_true", help="sample new beacons off the grid")
    common.add_argument("--no-mutation", action="store_true", help="disable the Stage 2 positional mutation")
    common.add_argument("--no-drop-pass", action="store_true",
                        help="keep Stage 1 placements as grown instead of removing redundant beacons")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    common.add_argument("--log-file", help="also write log output to this file")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="beaconplacer",
        description="Minimum-count, low-GDOP ultrasonic beacon placement for indoor drone localization",
    )
    parser.add_argument("--version", action="version", version=f"BeaconPlacer {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("solve", parents=[common], help="compute a placement for a floor plan")
    p.add_argument("plan", help="floor-plan JSON file")
    p.add_argument("-o", "--output", help="placement file to write (default: <plan>.placement.json)")

    p = sub.add_parser("gdop-map", parents=[common], help="per-point GDOP CSV and a top-down image")
    p.add_argument("plan", help="floor-plan JSON file")
    p.add_argument("placement", help="placement JSON file")
    p.add_argument("--csv", dest="out_csv", help="CSV output (default: <placement>.gdop.csv)")
    p.add_argument("--image", dest="out_image", help="PGM image output (default: <placement>.gdop.pgm)")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo localization error report")
    p.add_argument("plan", help="floor-plan JSON file")
    p.add_argument("placement", help="placement JSON file")
    p.add_argument("--points", type=int, default=20, help="number of drone points to test (default: 20)")
    p.add_argument("--trials", type=int, default=10000, help="trials per point (default: 10000)")
    p.add_argument("--sigma-r", type=float, default=0.01, help="ranging noise std in metres (default: 0.01)")
    p.add_argument("-o", "--output", help="CSV output (default: <placement>.sim.csv)")

    p = sub.add_parser("bounds", parents=[common], help="lower bounds and, for small instances, the exact optimum")
    p.add_argument("plan", help="floor-plan JSON file")
    p.add_argument("--max-sites", type=int, default=DEFAULT_MAX_SITES,
                   help=f"largest |B| for exhaustive search (default: {DEFAULT_MAX_SITES})")

    p = sub.add_parser("validate", parents=[common], help="recompute and check a placement file's metadata")
    p.add_argument("plan", help="floor-plan JSON file")
    p.add_argument("placement", help="placement JSON file")
    return parser


def _load_plan(path: str) -> PlanDocument:
    with open(path, "r", encoding="utf-8") as fh:
        return load_plan_document(fh.read(), path)


def _pick(*values):
    return next((v for v in values if v is not None), None)


def _problem(args, doc: PlanDocument, placement_file=None) -> PlacementProblem:
    """Flags override the placement file, which overrides the plan file, which overrides defaults."""
    stored_sensor = placement_file.sensor if placement_file is not None else None
    stored_drone = placement_file.drone_res_m if placement_file is not None else None
    stored_beacon = placement_file.beacon_res_m if placement_file is not None else None
    model = _pick(stored_sensor, doc.sensor, SensorModel())
    drone_res = _pick(args.drone_res, stored_drone, doc.drone_res_m, DEFAULT_RESOLUTION_M)
    beacon_res = _pick(args.beacon_res, stored_beacon, doc.beacon_res_m, DEFAULT_RESOLUTION_M)
    full_height = doc.full_height
    if placement_file is not None and "drone_zone" in placement_file.metadata:
        full_height = placement_file.full_height
    return PlacementProblem.build(doc.plan, model, drone_res, beacon_res, full_height)


def _config(args) -> EaConfig:
    g = args.gdop_threshold
    if g is None:
        g = RELAXED_GDOP_THRESHOLD if args.coverage_threshold < 1.0 else STRICT_GDOP_THRESHOLD
    return EaConfig(
        population_size_p=args.population,
        survivor_count_s=args.survivors,
        k_target=args.k,
        coverage_threshold=args.coverage_threshold,
        gdop_threshold_g=g,
        rng_seed=args.seed,
        max_generations=args.max_generations,
        mutation=not args.no_mutation,
        continuous=args.continuous,
        drop_pass=not args.no_drop_pass,
    )


def _default_output(path: str, suffix: str) -> Path:
    p = Path(path)
    stem = p.name[:-len(".placement.json")] if p.name.endswith(".placement.json") else p.stem
    return p.with_name(stem + suffix)


def _banner(title: str) -> None:
    print(f"\n{'=' * 60}")
    print(title)
    print('=' * 60)


def cmd_solve(args) -> int:
    doc = _load_plan(args.plan)
    config = _config(args)
    problem = _problem(args, doc)
    started = time.perf_counter()
    records: List[GenerationRecord] = []
    candidates = run_stage1(problem, config, on_generation=records.append)
    final = run_stage2(candidates, problem, config)
    elapsed = time.perf_counter() - started
    stage1_generations = records[-1].generation if records else 0

    document = build_placement_document(final, problem, config, doc.name or Path(args.plan).stem,
                                        stage1_generations, elapsed)
    out = Path(args.output) if args.output else _default_output(args.plan, ".placement.json")
    write_placement(out, document)

    meta = document["metadata"]
    _banner(f"Placement for {doc.name or args.plan}")
    print(f"Beacons:            {final.n_beacons}")
    for k, frac in enumerate(meta["per_k_fractions"], start=1):
        print(f"{k}-connectivity:     {frac * 100:.2f}%")
    scope = "covered points" if config.coverage_threshold < 1.0 else "all points"
    print(f"GDOP objective:     {meta['gdop_objective']:.4g} (target {config.gdop_threshold_g:g}, {scope})")
    print(f"GDOP_avg:           {meta['gdop_avg']:.4g} (covered points: {meta['covered_gdop_avg']:.4g})")
    print(f"Band:               {meta['band']} (target: {classify_band(config.gdop_threshold_g)} or better, "
          f"{'met' if meta['target_band_met'] else 'not met'})")
    print(f"Generations:        stage 1 {stage1_generations}, stage 2 {final.generations}")
    print(f"Alternatives:       {len(final.alternatives)}")
    print(f"Wall clock:         {elapsed:.1f} s")
    print(f"Written:            {out}")
    return EXIT_OK


def cmd_gdop_map(args) -> int:
    doc = _load_plan(args.plan)
    placement_file = read_placement(args.placement)
    check_plan_matches(placement_file, doc.plan)
    problem = _problem(args, doc, placement_file)
    gdop = problem.gdop_field(placement_file.placement.sites)
    out_csv = Path(args.out_csv) if args.out_csv else _default_output(args.placement, ".gdop.csv")
    out_image = Path(args.out_image) if args.out_image else _default_output(args.placement, ".gdop.pgm")
    write_gdop_csv(out_csv, gdop)
    write_gdop_pgm(out_image, gdop)

    _banner(f"GDOP map for {args.placement}")
    counts = {}
    for band in gdop.bands:
        counts[str(band)] = counts.get(str(band), 0) + 1
    for band, count in sorted(counts.items(), key=lambda kv: -kv[1]):
        print(f"{band:<30} {count:>6} ({100.0 * count / max(len(gdop), 1):.1f}%)")
    print(f"GDOP_avg: {gdop.average:.4g}; singular/under-covered: {gdop.fraction_singular * 100:.1f}%")
    print(f"CSV:   {out_csv}")
    print(f"Image: {out_image}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = _load_plan(args.plan)
    placement_file = read_placement(args.placement)
    check_plan_matches(placement_file, doc.plan)
    problem = _problem(args, doc, placement_file)
    points = problem.drone_domain.points
    gdop = problem.gdop_field(placement_file.placement.sites)
    solvable = solvable_points(placement_file.placement, points, doc.plan, problem.model)
    eligible = np.flatnonzero(solvable & ~np.asarray(gdop.singular))
    if len(eligible) == 0:
        raise CoverageError("no drone point hears 4 beacons outside a common plane")
    rng = np.random.default_rng(args.seed)
    chosen = np.sort(rng.choice(eligible, size=min(args.points, len(eligible)), replace=False))
    reports = simulate_localization(placement_file.placement, points[chosen], args.sigma_r, args.trials, rng,
                                    doc.plan, problem.model)
    out = Path(args.output) if args.output else _default_output(args.placement, ".sim.csv")
    write_simulation_csv(out, reports)

    ratios = np.array([r.ratio for r in reports])
    _banner(f"Monte-Carlo localization, sigma_r = {args.sigma_r} m, {args.trials} trials")
    print(f"Points:          {len(reports)}")
    print(f"RMSE / (sigma_r * GDOP): median {np.median(ratios):.3f}, "
          f"min {ratios.min():.3f}, max {ratios.max():.3f}")
    print(f"Written:         {out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    doc = _load_plan(args.plan)
    problem = _problem(args, doc)
    bc = problem.bc
    counting = counting_bound(bc, args.k)
    lp = lp_bound(bc, args.k)
    _banner(f"Bounds for {doc.name or args.plan} (k={args.k})")
    print(f"|D| = {bc.n_points}, |B| = {bc.n_sites}")
    print(f"Counting bound:  {counting}")
    print(f"LP bound:        {lp}")
    print(f"Lower bound:     {max(counting, lp)}")
    if bc.n_sites <= args.max_sites:
        count, sites = brute_force_min_cover(bc, args.k, args.max_sites)
        print(f"Exact optimum:   {count if count is not None else 'infeasible'}")
        if count is not None:
            print(f"Certificate:     sites {list(sites)}")
    else:
        print(f"Exact optimum:   skipped (|B| > {args.max_sites})")
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = _load_plan(args.plan)
    placement_file = read_placement(args.placement)
    problem = _problem(args, doc, placement_file)
    report = validate_placement(placement_file, problem)
    if report.ok:
        fractions = ", ".join(f"{f * 100:.2f}%" for f in report.recomputed["per_k_fractions"])
        print(f"PASS: {args.placement}")
        print(f"  per-k fractions: {fractions}")
        print(f"  GDOP objective: {report.recomputed['gdop_objective']:.6g} ({report.recomputed['band']})")
        print(f"  GDOP_avg: {report.recomputed['gdop_avg']:.6g}, covered points: "
              f"{report.recomputed['covered_gdop_avg']:.6g}")
        return EXIT_OK
    print(f"FAIL: {args.placement}")
    for message in report.messages:
        print(f"  {message}")
    return EXIT_VALIDATION_FAILED


COMMANDS = {
    "solve": cmd_solve,
    "gdop-map": cmd_gdop_map,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "validate": cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    _configure_logging(args.verbose, args.log_file)

    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as e:
        print(f"Infeasible: {e}", file=sys.stderr)
        if e.uncovered:
            print(f"  first uncovered drone point indices: {list(e.uncovered[:10])}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as e:
        print(f"Did not converge after {e.generations} generation(s): {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (BeaconPlacerError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
