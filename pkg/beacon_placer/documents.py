"""Placement documents and report files.

Placement documents are JSON with ``schema_version: 1``. Everything except the
``timing`` block is a deterministic function of the inputs and the seed, and the
``metadata`` numbers can be recomputed from the beacons plus the floor plan.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .__version__ import __version__
from .coverage import BeaconPlacement, PlacementProblem
from .errors import PlanParseError, PlanValidationError
from .gdop import GDOP_CAP, GdopField, classify_band, within_target_band
from .geometry import SURFACES, BeaconSite, FloorPlan, SensorModel
from .oracle_sim import SimReport
from .stage1 import EaConfig
from .stage2 import FinalPlacement

logger = logging.getLogger(__name__)

PLACEMENT_SCHEMA_VERSION = 1
TOOL_NAME = "beaconplacer"
METADATA_TOLERANCE = 1e-9

_TOP_KEYS = {"schema_version", "plan", "beacons", "metadata", "candidates", "timing"}
_BEACON_KEYS = {"position", "normal", "heading", "surface"}


@dataclass(frozen=True)
class PlacementFile:
    """A parsed placement document."""

    placement: BeaconPlacement
    metadata: Mapping[str, Any]
    candidates: Tuple[BeaconPlacement, ...] = ()
    plan_name: str = ""

    @property
    def sensor(self) -> Optional[SensorModel]:
        raw = self.metadata.get("sensor")
        if not raw:
            return None
        return SensorModel(float(raw["range_m"]), float(raw["cone_half_angle_deg"]),
                           tuple(tuple(d) for d in raw["array_directions"]))

    @property
    def drone_res_m(self) -> Optional[float]:
        value = self.metadata.get("resolution", {}).get("drone_m")
        return None if value is None else float(value)

    @property
    def beacon_res_m(self) -> Optional[float]:
        value = self.metadata.get("resolution", {}).get("beacon_m")
        return None if value is None else float(value)

    @property
    def full_height(self) -> bool:
        return self.metadata.get("drone_zone", "upper_half") == "full"

    @property
    def coverage_threshold(self) -> float:
        return float(self.metadata.get("config", {}).get("coverage_threshold", 1.0))

    @property
    def gdop_threshold_g(self) -> float:
        return float(self.metadata.get("config", {}).get("gdop_threshold_g", 20.0))


@dataclass
class ValidationReport:
    ok: bool
    messages: List[str] = field(default_factory=list)
    recomputed: Dict[str, Any] = field(default_factory=dict)


def _beacons_to_list(placement: BeaconPlacement) -> List[Dict[str, Any]]:
    return [site.to_dict() for site in placement.sites]


def placement_metrics(problem: PlacementProblem, placement: BeaconPlacement,
                      coverage_threshold: float = 1.0, gdop_threshold_g: float = 20.0) -> Dict[str, Any]:
    """Per-k fractions, GDOP averages and band of ``placement`` on ``problem``.

    ``gdop_objective`` is the value the search compares with g: the plain average
    under strict coverage, the covered-point average when the coverage threshold is
    relaxed. The band classifies the objective.
    """
    gdop = problem.gdop_field(placement.sites)
    objective = gdop.objective(coverage_threshold)
    return {
        "per_k_fractions": list(problem.per_k_fractions(placement.sites)),
        "gdop_avg": gdop.average,
        "covered_gdop_avg": gdop.covered_average,
        "gdop_objective": objective,
        "band": str(classify_band(objective)),
        "target_band_met": within_target_band(objective, gdop_threshold_g),
    }


def build_placement_document(final: FinalPlacement, problem: PlacementProblem, config: EaConfig,
                             plan_name: str = "", stage1_generations: int = 0,
                             wall_clock_s: Optional[float] = None,
                             created: Optional[datetime] = None) -> Dict[str, Any]:
    created = created or datetime.now(timezone.utc)
    metadata = placement_metrics(problem, final.beacons, config.coverage_threshold, config.gdop_threshold_g)
    metadata.update({
        "n_beacons": final.n_beacons,
        "config": config.to_dict(),
        "sensor": problem.model.to_dict(),
        "resolution": {"drone_m": problem.drone_domain.resolution_m, "beacon_m": problem.resolution_m},
        "drone_zone": "full" if problem.full_height else "upper_half",
        "generations": {"stage1": stage1_generations, "stage2": final.generations},
        "provenance": {"tool": TOOL_NAME, "version": __version__},
    })
    return {
        "schema_version": PLACEMENT_SCHEMA_VERSION,
        "plan": plan_name,
        "beacons": _beacons_to_list(final.beacons),
        "metadata": metadata,
        "candidates": [_beacons_to_list(alt.beacons) for alt in final.alternatives],
        "timing": {
            "created": created.isoformat(timespec="seconds"),
            "wall_clock_s": None if wall_clock_s is None else round(float(wall_clock_s), 3),
        },
    }


def write_placement(path: Union[str, Path], document: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2)
        fh.write("\n")
    logger.info(f"Wrote placement document {path}")
    return path


def _parse_site(raw: Any, where: str, source: Optional[str]) -> BeaconSite:
    if not isinstance(raw, dict):
        raise PlanParseError(f"{where} must be an object", source)
    unknown = sorted(set(raw) - _BEACON_KEYS)
    if unknown:
        raise PlanParseError(f"unknown field(s) in {where}: {', '.join(unknown)}", source)
    for key in ("position", "normal"):
        value = raw.get(key)
        if not isinstance(value, list) or len(value) != 3 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise PlanParseError(f"{where}.{key} must be a list of three numbers", source)
    surface = raw.get("surface", "free")
    if not isinstance(surface, str):
        raise PlanParseError(f"{where}.surface must be a string", source)
    heading = raw.get("heading")
    return BeaconSite(tuple(raw["position"]), tuple(raw["normal"]),
                      tuple(heading) if heading is not None else None, surface)


def _parse_sites(raw: Any, where: str, source: Optional[str]) -> BeaconPlacement:
    if not isinstance(raw, list):
        raise PlanParseError(f"{where} must be a list", source)
    return BeaconPlacement(tuple(_parse_site(b, f"{where}[{i}]", source) for i, b in enumerate(raw)))


def load_placement_document(document: Union[str, bytes, Mapping[str, Any]],
                            source: Optional[str] = None) -> PlacementFile:
    """Parse a placement document; unknown top-level or beacon fields are rejected."""
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            raise PlanParseError(e.msg, source, e.lineno, e.colno) from e
    else:
        data = dict(document)
    if not isinstance(data, dict):
        raise PlanParseError("placement document must be an object", source)
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise PlanParseError(f"unknown field(s) in placement: {', '.join(unknown)}", source)
    version = data.get("schema_version")
    if version != PLACEMENT_SCHEMA_VERSION:
        raise PlanParseError(f"unsupported schema_version {version!r} (expected {PLACEMENT_SCHEMA_VERSION})",
                             source)
    if "beacons" not in data:
        raise PlanParseError("missing required field 'beacons'", source)
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise PlanParseError("metadata must be an object", source)
    candidates = tuple(_parse_sites(c, f"candidates[{i}]", source)
                       for i, c in enumerate(data.get("candidates", [])))
    return PlacementFile(_parse_sites(data["beacons"], "beacons", source), metadata, candidates,
                         str(data.get("plan", "")))


def read_placement(path: Union[str, Path]) -> PlacementFile:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return load_placement_document(fh.read(), str(path))


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=METADATA_TOLERANCE, abs_tol=METADATA_TOLERANCE)


def validate_placement(placement_file: PlacementFile, problem: PlacementProblem) -> ValidationReport:
    """Recompute the metadata of a placement document and compare it within 1e-9."""
    report = ValidationReport(ok=True)
    try:
        placement_file.placement.check_in_domain(problem.plan)
    except PlanValidationError as e:
        report.ok = False
        report.messages.append(str(e))
        return report

    recomputed = placement_metrics(problem, placement_file.placement, placement_file.coverage_threshold,
                                   placement_file.gdop_threshold_g)
    report.recomputed = recomputed
    meta = placement_file.metadata

    stored_fractions = meta.get("per_k_fractions")
    if stored_fractions is not None:
        if len(stored_fractions) != len(recomputed["per_k_fractions"]):
            report.ok = False
            report.messages.append(f"per_k_fractions has {len(stored_fractions)} entries, expected "
                                   f"{len(recomputed['per_k_fractions'])}")
        else:
            for k, (stored, fresh) in enumerate(zip(stored_fractions, recomputed["per_k_fractions"]), start=1):
                if not _close(float(stored), fresh):
                    report.ok = False
                    report.messages.append(f"{k}-connectivity fraction: stored {stored}, recomputed {fresh}")
    for key in ("gdop_avg", "covered_gdop_avg", "gdop_objective"):
        if key in meta and not _close(float(meta[key]), recomputed[key]):
            report.ok = False
            report.messages.append(f"{key}: stored {meta[key]}, recomputed {recomputed[key]}")
    if "band" in meta and meta["band"] != recomputed["band"]:
        report.ok = False
        report.messages.append(f"band: stored {meta['band']}, recomputed {recomputed['band']}")
    if "target_band_met" in meta and bool(meta["target_band_met"]) != recomputed["target_band_met"]:
        report.ok = False
        report.messages.append(f"target_band_met: stored {meta['target_band_met']}, "
                               f"recomputed {recomputed['target_band_met']}")
    if "n_beacons" in meta and int(meta["n_beacons"]) != len(placement_file.placement):
        report.ok = False
        report.messages.append(f"n_beacons: stored {meta['n_beacons']}, file has {len(placement_file.placement)}")
    return report


def check_plan_matches(placement_file: PlacementFile, plan: FloorPlan) -> None:
    """Raise ``PlanValidationError('plan-mismatch')`` when beacons lie outside the room."""
    lo = np.asarray(plan.room.lo) - 1e-6
    hi = np.asarray(plan.room.hi) + 1e-6
    for idx, site in enumerate(placement_file.placement.sites):
        p = np.asarray(site.position)
        if np.any(p < lo) or np.any(p > hi):
            raise PlanValidationError("plan-mismatch",
                                      f"beacon {idx} at {site.position} lies outside the room {plan.room.hi}")
        if site.surface not in SURFACES:
            raise PlanValidationError("plan-mismatch", f"beacon {idx} has unknown surface {site.surface!r}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def write_gdop_csv(path: Union[str, Path], gdop: GdopField) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "gdop", "band"])
        for point, result in zip(gdop.points, gdop):
            writer.writerow([f"{point[0]:.4f}", f"{point[1]:.4f}", f"{point[2]:.4f}",
                             f"{result.value:.6g}", str(result.band)])
    return path


def gdop_projection(gdop: GdopField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum GDOP along z for every (x, y) column; NaN where D has no point.

    Returns (image, xs, ys) with image[row, col] for ys[row], xs[col].
    """
    pts = np.asarray(gdop.points)
    if len(pts) == 0:
        return np.full((0, 0), np.nan), np.zeros(0), np.zeros(0)
    xs = np.unique(np.round(pts[:, 0], 6))
    ys = np.unique(np.round(pts[:, 1], 6))
    col = np.searchsorted(xs, np.round(pts[:, 0], 6))
    row = np.searchsorted(ys, np.round(pts[:, 1], 6))
    image = np.full((len(ys), len(xs)), np.inf)
    np.minimum.at(image, (row, col), np.asarray(gdop.values))
    image[np.isinf(image)] = np.nan
    return image, xs, ys


def write_gdop_pgm(path: Union[str, Path], gdop: GdopField) -> Path:
    """Binary PGM of the z-projection: log scale, dark is low GDOP, 255 marks empty columns."""
    image, _, _ = gdop_projection(gdop)
    shade = np.full(image.shape, 255, dtype=np.uint8)
    filled = ~np.isnan(image)
    if filled.any():
        scaled = np.log10(np.clip(image[filled], 1.0, GDOP_CAP)) / math.log10(GDOP_CAP)
        shade[filled] = np.round(254 * scaled).astype(np.uint8)
    shade = shade[::-1]  # +y at the top
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{shade.shape[1]} {shade.shape[0]}\n255\n".encode("ascii"))
        fh.write(shade.tobytes())
    return path


def write_simulation_csv(path: Union[str, Path], reports: Sequence[SimReport]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "gdop", "predicted_sigma", "rmse", "ratio", "trials"])
        for r in reports:
            writer.writerow([f"{r.point[0]:.4f}", f"{r.point[1]:.4f}", f"{r.point[2]:.4f}",
                             f"{r.gdop:.6g}", f"{r.predicted_sigma:.6g}", f"{r.per_point_rmse:.6g}",
                             f"{r.ratio:.6g}", r.trials])
    return path


__all__ = [
    "PLACEMENT_SCHEMA_VERSION",
    "PlacementFile",
    "ValidationReport",
    "placement_metrics",
    "build_placement_document",
    "write_placement",
    "load_placement_document",
    "read_placement",
    "validate_placement",
    "check_plan_matches",
    "write_gdop_csv",
    "gdop_projection",
    "write_gdop_pgm",
    "write_simulation_csv",
]
