"""Floor plans, flight / mounting domains, line of sight and single-beacon coverage.

Everything downstream (connectivity matrix, GDOP fields, the evolutionary
search) consumes the predicates defined here. All types are immutable once
constructed and all functions are pure.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, EmptyDomainError, PlanParseError, PlanValidationError
from .utils import as_points, frozen_array

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]

PLAN_SCHEMA_VERSION = 1

DEFAULT_RANGE_M = 3.5
DEFAULT_HALF_ANGLE_DEG = 45.0
DEFAULT_TILT_DEG = 65.0
DEFAULT_AZIMUTH_COUNT = 5
DEFAULT_RESOLUTION_M = 0.25
FOOTPRINT_SAMPLES = 200

CEILING = "ceiling"
WALL_X0 = "wall_x0"
WALL_X1 = "wall_x1"
WALL_Y0 = "wall_y0"
WALL_Y1 = "wall_y1"
FREE = "free"
SURFACES = (CEILING, WALL_X0, WALL_X1, WALL_Y0, WALL_Y1)

_EPS = 1e-9


def _vec3(values: Sequence[float], name: str = "vector") -> Vec3:
    if len(values) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(values)}")
    return (float(values[0]), float(values[1]), float(values[2]))


def rotate_z90(v: Sequence[float], turns: int = 1) -> Vec3:
    """Rotate a vector by ``turns`` quarter turns about the z axis (exact in floating point)."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    for _ in range(turns % 4):
        x, y = -y, x
    return (x, y, z)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its min and max corners (meters)."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo, "lo"))
        object.__setattr__(self, "hi", _vec3(self.hi, "hi"))

    @property
    def size(self) -> Vec3:
        return (self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2])

    @property
    def width(self) -> float:
        return self.size[0]

    @property
    def depth(self) -> float:
        return self.size[1]

    @property
    def height(self) -> float:
        return self.size[2]

    def contains_point(self, p: Sequence[float], tol: float = _EPS) -> bool:
        return all(self.lo[i] - tol <= p[i] <= self.hi[i] + tol for i in range(3))

    def contains_box(self, other: "Box", tol: float = _EPS) -> bool:
        return self.contains_point(other.lo, tol) and self.contains_point(other.hi, tol)

    def rotated_z90(self, turns: int = 1) -> "Box":
        a = rotate_z90(self.lo, turns)
        b = rotate_z90(self.hi, turns)
        return Box(tuple(min(a[i], b[i]) for i in range(3)), tuple(max(a[i], b[i]) for i in range(3)))


@dataclass(frozen=True)
class FloorPlan:
    """Room bounding box plus opaque box obstacles (each one acts as an extra wall)."""

    room: Box
    obstacles: Tuple[Box, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if min(self.room.size) <= 0:
            raise PlanValidationError("room-extent", f"room extent must be strictly positive, got {self.room.size}")
        for idx, box in enumerate(self.obstacles):
            if min(box.size) <= 0:
                raise PlanValidationError("obstacle-extent",
                                          f"obstacle {idx} has non-positive extent {box.size}")
            if not self.room.contains_box(box):
                raise PlanValidationError("obstacle-containment",
                                          f"obstacle {idx} {box.lo}-{box.hi} is not inside the room "
                                          f"{self.room.lo}-{self.room.hi}")

    @property
    def mid_height(self) -> float:
        """z coordinate splitting the room into lower and upper halves."""
        return self.room.lo[2] + self.room.height / 2.0

    def rotated_z90(self, turns: int = 1) -> "FloorPlan":
        return FloorPlan(self.room.rotated_z90(turns), tuple(b.rotated_z90(turns) for b in self.obstacles))


def _array_directions(tilt_deg: float, azimuth_count: int) -> Tuple[Vec3, ...]:
    tilt = math.radians(tilt_deg)
    dirs: List[Vec3] = [(0.0, 0.0, 1.0)]
    for i in range(azimuth_count):
        phi = 2.0 * math.pi * i / azimuth_count
        dirs.append((math.sin(tilt) * math.cos(phi), math.sin(tilt) * math.sin(phi), math.cos(tilt)))
    return tuple(dirs)


@dataclass(frozen=True)
class SensorModel:
    """One beacon array: range, per-sensor cone half-angle and sensor pointing axes.

    ``array_directions`` are expressed in the mount frame, where +z is the inward
    surface normal and +x is the site's heading.
    """

    range_m: float = DEFAULT_RANGE_M
    cone_half_angle_deg: float = DEFAULT_HALF_ANGLE_DEG
    array_directions: Tuple[Vec3, ...] = field(
        default_factory=lambda: _array_directions(DEFAULT_TILT_DEG, DEFAULT_AZIMUTH_COUNT))

    def __post_init__(self):
        object.__setattr__(self, "array_directions", tuple(_vec3(d, "array direction") for d in self.array_directions))
        if not self.range_m > 0:
            raise PlanValidationError("sensor-range", f"range_m must be > 0, got {self.range_m}")
        if not 0 < self.cone_half_angle_deg < 90:
            raise PlanValidationError("sensor-cone",
                                      f"cone_half_angle_deg must be in (0, 90), got {self.cone_half_angle_deg}")
        if not self.array_directions:
            raise PlanValidationError("sensor-array", "array needs at least one direction")
        for d in self.array_directions:
            if abs(math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) - 1.0) > 1e-9:
                raise PlanValidationError("sensor-array", f"array direction {d} is not unit length")

    @classmethod
    def array(cls, range_m: float = DEFAULT_RANGE_M, cone_half_angle_deg: float = DEFAULT_HALF_ANGLE_DEG,
              tilt_deg: float = DEFAULT_TILT_DEG, azimuth_count: int = DEFAULT_AZIMUTH_COUNT) -> "SensorModel":
        """Normal-pointing sensor plus ``azimuth_count`` sensors tilted ``tilt_deg`` off the normal."""
        if azimuth_count < 0:
            raise PlanValidationError("sensor-array", f"azimuth_count must be >= 0, got {azimuth_count}")
        return cls(range_m, cone_half_angle_deg, _array_directions(tilt_deg, azimuth_count))

    @cached_property
    def directions(self) -> np.ndarray:
        return frozen_array(self.array_directions)

    @cached_property
    def cos_half_angle(self) -> float:
        return math.cos(math.radians(self.cone_half_angle_deg))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "range_m": self.range_m,
            "cone_half_angle_deg": self.cone_half_angle_deg,
            "array_directions": [list(d) for d in self.array_directions],
        }


def _default_heading(normal: Vec3) -> Vec3:
    return (1.0, 0.0, 0.0) if abs(normal[2]) > 0.9 else (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class BeaconSite:
    """Mount point of one beacon array: position, inward normal and heading tangent."""

    position: Vec3
    normal: Vec3
    heading: Optional[Vec3] = None
    surface: str = FREE

    def __post_init__(self):
        pos = _vec3(self.position, "position")
        n = np.asarray(_vec3(self.normal, "normal"))
        norm = float(np.linalg.norm(n))
        if norm == 0:
            raise PlanValidationError("site-normal", "beacon normal must be non-zero")
        n = n / norm
        candidates = [_vec3(self.heading, "heading")] if self.heading is not None else []
        candidates += [_default_heading(tuple(n)), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
        for c in candidates:
            h = np.asarray(c, dtype=float)
            h = h - np.dot(h, n) * n
            if np.linalg.norm(h) > 1e-6:
                break
        h = h / np.linalg.norm(h)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "normal", tuple(float(v) for v in n))
        object.__setattr__(self, "heading", tuple(float(v) for v in h))

    @cached_property
    def frame(self) -> np.ndarray:
        """Rows are the mount frame axes (heading, normal x heading, normal) in world coordinates."""
        e3 = np.asarray(self.normal)
        e1 = np.asarray(self.heading)
        return frozen_array([e1, np.cross(e3, e1), e3])

    def key(self) -> Tuple[str, int, int, int]:
        """Identity at 1 mm resolution; used for duplicate checks and coverage caching."""
        return (self.surface,) + tuple(int(round(c * 1000.0)) for c in self.position)

    def moved_to(self, position: Sequence[float]) -> "BeaconSite":
        return BeaconSite(position, self.normal, self.heading, self.surface)

    def rotated_z90(self, turns: int = 1) -> "BeaconSite":
        return BeaconSite(rotate_z90(self.position, turns), rotate_z90(self.normal, turns),
                          rotate_z90(self.heading, turns), self.surface)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "position": list(self.position),
            "normal": list(self.normal),
            "heading": list(self.heading),
            "surface": self.surface,
        }


@dataclass(frozen=True, eq=False)
class DroneDomain:
    """Discretized flight space D."""

    points: np.ndarray
    resolution_m: float

    def __post_init__(self):
        object.__setattr__(self, "points", frozen_array(as_points(self.points) if len(self.points) else np.zeros((0, 3))))

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True, eq=False)
class BeaconDomain:
    """Discretized mounting surfaces B (ceiling plus top half of the walls)."""

    sites: Tuple[BeaconSite, ...]
    resolution_m: float

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))

    def __len__(self) -> int:
        return len(self.sites)

    @cached_property
    def positions(self) -> np.ndarray:
        return frozen_array([s.position for s in self.sites]) if self.sites else frozen_array(np.zeros((0, 3)))

    @cached_property
    def by_surface(self) -> Dict[str, Tuple[int, ...]]:
        """Site indices grouped by surface, in the fixed order of ``SURFACES``."""
        groups: Dict[str, List[int]] = {}
        for idx, site in enumerate(self.sites):
            groups.setdefault(site.surface, []).append(idx)
        order = [s for s in SURFACES if s in groups] + sorted(s for s in groups if s not in SURFACES)
        return {s: tuple(groups[s]) for s in order}

    @cached_property
    def index_of(self) -> Dict[Tuple[str, int, int, int], int]:
        return {site.key(): idx for idx, site in enumerate(self.sites)}


# ---------------------------------------------------------------------------
# Floor-plan documents
# ---------------------------------------------------------------------------

_PLAN_KEYS = {"schema_version", "name", "description", "room", "obstacles", "sensor", "resolution", "drone_zone"}
_OBSTACLE_KEYS = {"min", "max", "label"}
_SENSOR_KEYS = {"range_m", "cone_half_angle_deg", "tilt_deg", "azimuth_count"}
_RESOLUTION_KEYS = {"drone_m", "beacon_m"}
_DRONE_ZONES = {"upper_half", "full"}


@dataclass(frozen=True)
class PlanDocument:
    """A parsed floor-plan file: the plan plus its optional overrides."""

    plan: FloorPlan
    name: str = ""
    sensor: Optional[SensorModel] = None
    drone_res_m: Optional[float] = None
    beacon_res_m: Optional[float] = None
    full_height: bool = False


def _number(value: Any, where: str, source: Optional[str]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlanParseError(f"{where} must be a number, got {value!r}", source)
    return float(value)


def _triple(value: Any, where: str, source: Optional[str]) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise PlanParseError(f"{where} must be a list of three numbers", source)
    return tuple(_number(v, f"{where}[{i}]", source) for i, v in enumerate(value))


def _check_keys(obj: Any, allowed: set, where: str, source: Optional[str]) -> Mapping[str, Any]:
    if not isinstance(obj, dict):
        raise PlanParseError(f"{where} must be an object", source)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise PlanParseError(f"unknown field(s) in {where}: {', '.join(unknown)}", source)
    return obj


def load_plan_document(document: Union[str, bytes, Mapping[str, Any]], source: Optional[str] = None) -> PlanDocument:
    """Parse and validate a floor-plan document (JSON text or an already-decoded mapping).

    Parsing is strict: unknown fields are rejected.
    """
    if isinstance(document, (str, bytes)):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            raise PlanParseError(e.msg, source, e.lineno, e.colno) from e
    else:
        data = dict(document)

    data = _check_keys(data, _PLAN_KEYS, "plan", source)
    version = data.get("schema_version", PLAN_SCHEMA_VERSION)
    if version != PLAN_SCHEMA_VERSION:
        raise PlanParseError(f"unsupported schema_version {version!r} (expected {PLAN_SCHEMA_VERSION})", source)
    if "room" not in data:
        raise PlanParseError("missing required field 'room'", source)

    dims = _triple(data["room"], "room", source)
    room = Box((0.0, 0.0, 0.0), dims)

    obstacles = []
    raw_obstacles = data.get("obstacles", [])
    if not isinstance(raw_obstacles, list):
        raise PlanParseError("obstacles must be a list", source)
    for idx, raw in enumerate(raw_obstacles):
        raw = _check_keys(raw, _OBSTACLE_KEYS, f"obstacles[{idx}]", source)
        if "min" not in raw or "max" not in raw:
            raise PlanParseError(f"obstacles[{idx}] needs 'min' and 'max'", source)
        obstacles.append(Box(_triple(raw["min"], f"obstacles[{idx}].min", source),
                             _triple(raw["max"], f"obstacles[{idx}].max", source)))

    plan = FloorPlan(room, tuple(obstacles))

    sensor = None
    if "sensor" in data:
        raw = _check_keys(data["sensor"], _SENSOR_KEYS, "sensor", source)
        count = raw.get("azimuth_count", DEFAULT_AZIMUTH_COUNT)
        if isinstance(count, bool) or not isinstance(count, int):
            raise PlanParseError("sensor.azimuth_count must be an integer", source)
        sensor = SensorModel.array(
            range_m=_number(raw.get("range_m", DEFAULT_RANGE_M), "sensor.range_m", source),
            cone_half_angle_deg=_number(raw.get("cone_half_angle_deg", DEFAULT_HALF_ANGLE_DEG),
                                        "sensor.cone_half_angle_deg", source),
            tilt_deg=_number(raw.get("tilt_deg", DEFAULT_TILT_DEG), "sensor.tilt_deg", source),
            azimuth_count=count,
        )

    drone_res = beacon_res = None
    if "resolution" in data:
        raw = _check_keys(data["resolution"], _RESOLUTION_KEYS, "resolution", source)
        if "drone_m" in raw:
            drone_res = _number(raw["drone_m"], "resolution.drone_m", source)
        if "beacon_m" in raw:
            beacon_res = _number(raw["beacon_m"], "resolution.beacon_m", source)

    zone = data.get("drone_zone", "upper_half")
    if zone not in _DRONE_ZONES:
        raise PlanParseError(f"drone_zone must be one of {sorted(_DRONE_ZONES)}, got {zone!r}", source)

    name = data.get("name", "")
    if not isinstance(name, str):
        raise PlanParseError("name must be a string", source)

    return PlanDocument(plan, name, sensor, drone_res, beacon_res, zone == "full")


def load_floor_plan(document: Union[str, bytes, Mapping[str, Any]], source: Optional[str] = None) -> FloorPlan:
    """Parse a floor-plan document and return only the validated ``FloorPlan``."""
    return load_plan_document(document, source).plan


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

def _axis_centers(lo: float, length: float, res: float) -> np.ndarray:
    """Cell centers of a 1-D grid of spacing ``res`` centred in [lo, lo + length]."""
    n = int(math.floor(length / res + 1e-9))
    if n <= 0:
        return np.zeros(0)
    start = lo + (length - n * res) / 2.0 + res / 2.0
    return start + res * np.arange(n)


def _inside_any(plan: FloorPlan, points: np.ndarray, inflate: float = 0.0, strict: bool = True) -> np.ndarray:
    hit = np.zeros(len(points), dtype=bool)
    for box in plan.obstacles:
        lo = np.asarray(box.lo) - inflate
        hi = np.asarray(box.hi) + inflate
        if strict:
            inside = np.all((points > lo + _EPS) & (points < hi - _EPS), axis=1)
        else:
            inside = np.all((points >= lo - _EPS) & (points <= hi + _EPS), axis=1)
        hit |= inside
    return hit


def _grid(*axes: np.ndarray) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def discretize_domains(plan: FloorPlan, drone_res_m: float = DEFAULT_RESOLUTION_M,
                       beacon_res_m: float = DEFAULT_RESOLUTION_M,
                       full_height: bool = False) -> Tuple[DroneDomain, BeaconDomain]:
    """Sample the flight space D and the mounting surfaces B.

    D is a cell-centred grid over the upper half of the room (the whole height when
    ``full_height``), so every point sits half a cell away from walls and ceiling;
    points closer than half a cell to an obstacle are dropped. B samples the
    ceiling and the top half of the four walls the same way; sites on or inside an
    obstacle are dropped.
    """
    room = plan.room
    smallest = min(room.size)
    for name, res in (("drone_res_m", drone_res_m), ("beacon_res_m", beacon_res_m)):
        if not 0 < res <= smallest + _EPS:
            raise DomainError(f"{name} must be in (0, {smallest}], got {res}")

    (x0, y0, z0), (x1, y1, z1) = room.lo, room.hi
    zmid = plan.mid_height

    z_lo = z0 if full_height else zmid
    dx = _axis_centers(x0, room.width, drone_res_m)
    dy = _axis_centers(y0, room.depth, drone_res_m)
    dz = _axis_centers(z_lo, z1 - z_lo, drone_res_m)
    points = _grid(dx, dy, dz) if len(dx) and len(dy) and len(dz) else np.zeros((0, 3))
    if len(points) and plan.obstacles:
        points = points[~_inside_any(plan, points, inflate=drone_res_m / 2.0)]
    if len(points) == 0:
        raise EmptyDomainError(f"drone domain is empty at resolution {drone_res_m} m")

    bx = _axis_centers(x0, room.width, beacon_res_m)
    by = _axis_centers(y0, room.depth, beacon_res_m)
    bz = _axis_centers(zmid, z1 - zmid, beacon_res_m)
    sites: List[BeaconSite] = []

    def _add(surface: str, coords: np.ndarray, normal: Vec3, heading: Vec3):
        if len(coords) == 0:
            return
        keep = ~_inside_any(plan, coords, strict=False) if plan.obstacles else np.ones(len(coords), dtype=bool)
        for p in coords[keep]:
            sites.append(BeaconSite(tuple(p), normal, heading, surface))

    up = (0.0, 0.0, 1.0)
    if len(bx) and len(by):
        ceiling = _grid(bx, by, np.array([z1]))
        _add(CEILING, ceiling, (0.0, 0.0, -1.0), (1.0, 0.0, 0.0))
    if len(by) and len(bz):
        _add(WALL_X0, _grid(np.array([x0]), by, bz), (1.0, 0.0, 0.0), up)
        _add(WALL_X1, _grid(np.array([x1]), by, bz), (-1.0, 0.0, 0.0), up)
    if len(bx) and len(bz):
        _add(WALL_Y0, _grid(bx, np.array([y0]), bz), (0.0, 1.0, 0.0), up)
        _add(WALL_Y1, _grid(bx, np.array([y1]), bz), (0.0, -1.0, 0.0), up)
    if not sites:
        raise EmptyDomainError(f"beacon domain is empty at resolution {beacon_res_m} m")

    logger.debug(f"Discretized plan: |D|={len(points)} at {drone_res_m} m, |B|={len(sites)} at {beacon_res_m} m")
    return DroneDomain(points, drone_res_m), BeaconDomain(tuple(sites), beacon_res_m)


def surface_bounds(plan: FloorPlan, surface: str) -> Tuple[Vec3, Vec3]:
    """Closed box describing where a beacon may sit on ``surface`` (a degenerate box)."""
    (x0, y0, z0), (x1, y1, z1) = plan.room.lo, plan.room.hi
    zmid = plan.mid_height
    bounds = {
        CEILING: ((x0, y0, z1), (x1, y1, z1)),
        WALL_X0: ((x0, y0, zmid), (x0, y1, z1)),
        WALL_X1: ((x1, y0, zmid), (x1, y1, z1)),
        WALL_Y0: ((x0, y0, zmid), (x1, y0, z1)),
        WALL_Y1: ((x0, y1, zmid), (x1, y1, z1)),
    }
    if surface not in bounds:
        raise ValueError(f"unknown surface {surface!r}")
    return bounds[surface]


def site_in_beacon_domain(plan: FloorPlan, site: BeaconSite) -> bool:
    """True when ``site`` lies on the ceiling or the top half of a wall, outside obstacles."""
    if site.surface not in SURFACES:
        return False
    lo, hi = surface_bounds(plan, site.surface)
    p = site.position
    if not all(lo[i] - 1e-6 <= p[i] <= hi[i] + 1e-6 for i in range(3)):
        return False
    if plan.obstacles and _inside_any(plan, np.asarray([p]), strict=False)[0]:
        return False
    return True


# ---------------------------------------------------------------------------
# Visibility and coverage
# ---------------------------------------------------------------------------

def line_of_sight_many(plan: FloorPlan, origin: Sequence[float], targets) -> np.ndarray:
    """Vectorized ``line_of_sight`` from one origin to many targets."""
    q = as_points(targets)
    p = np.asarray(origin, dtype=float)
    n = len(q)
    visible = np.ones(n, dtype=bool)
    if not plan.obstacles or n == 0:
        return visible
    d = q - p
    for box in plan.obstacles:
        lo = np.asarray(box.lo)
        hi = np.asarray(box.hi)
        t_lo = np.full(n, -np.inf)
        t_hi = np.full(n, np.inf)
        for axis in range(3):
            da = d[:, axis]
            flat = da == 0
            outside = (p[axis] < lo[axis]) | (p[axis] > hi[axis])
            if outside:
                t_lo = np.where(flat, np.inf, t_lo)
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo[axis] - p[axis]) / da
                t2 = (hi[axis] - p[axis]) / da
            tmin = np.where(flat, -np.inf, np.minimum(t1, t2))
            tmax = np.where(flat, np.inf, np.maximum(t1, t2))
            t_lo = np.maximum(t_lo, tmin)
            t_hi = np.minimum(t_hi, tmax)
        blocked = (t_lo <= t_hi) & (t_lo < 1.0) & (t_hi > 0.0)
        visible &= ~blocked
    return visible


def line_of_sight(plan: FloorPlan, p: Sequence[float], q: Sequence[float]) -> bool:
    """True iff the open segment (p, q) misses every obstacle.

    Slab test with closed boxes: a segment grazing a face, edge or corner is blocked.
    """
    return bool(line_of_sight_many(plan, p, [q])[0])


def world_directions(model: SensorModel, site: BeaconSite) -> np.ndarray:
    """The array's sensor axes expressed in world coordinates for this mount."""
    return model.directions @ site.frame


def coverage_mask(model: SensorModel, site: BeaconSite, points, plan: FloorPlan) -> np.ndarray:
    """Vectorized ``beacon_covers`` over many points."""
    pts = as_points(points)
    pos = np.asarray(site.position)
    v = pts - pos
    dist = np.linalg.norm(v, axis=1)
    mask = (dist > 0) & (dist <= model.range_m + 1e-12)
    if not mask.any():
        return mask
    unit = v[mask] / dist[mask, None]
    cosines = unit @ world_directions(model, site).T
    in_cone = np.any(cosines >= model.cos_half_angle - 1e-12, axis=1)
    idx = np.flatnonzero(mask)
    mask[idx[~in_cone]] = False
    if plan.obstacles and mask.any():
        idx = np.flatnonzero(mask)
        mask[idx] = line_of_sight_many(plan, pos, pts[idx])
    return mask


def beacon_covers(model: SensorModel, site: BeaconSite, point: Sequence[float], plan: FloorPlan) -> bool:
    """True iff the beacon at ``site`` reaches ``point``: in range, inside a sensor cone, and in line of sight."""
    return bool(coverage_mask(model, site, [point], plan)[0])


def in_drone_region(plan: FloorPlan, points, full_height: bool = False) -> np.ndarray:
    """Membership in the continuous flight region that D samples."""
    pts = as_points(points)
    lo = np.asarray(plan.room.lo)
    hi = np.asarray(plan.room.hi)
    inside = np.all((pts >= lo - _EPS) & (pts <= hi + _EPS), axis=1)
    if not full_height:
        inside &= pts[:, 2] >= plan.mid_height - _EPS
    if plan.obstacles:
        inside &= ~_inside_any(plan, pts)
    return inside


@lru_cache(maxsize=32)
def footprint_samples(model: SensorModel, count: int = FOOTPRINT_SAMPLES, seed: int = 0) -> np.ndarray:
    """Uniform sample of ``count`` points of one array's coverage volume, in the mount frame."""
    rng = np.random.default_rng(seed)
    dirs = model.directions
    accepted: List[np.ndarray] = []
    total = 0
    while total < count:
        raw = rng.normal(size=(4 * count, 3))
        raw /= np.linalg.norm(raw, axis=1)[:, None]
        keep = np.any(raw @ dirs.T >= model.cos_half_angle, axis=1)
        raw = raw[keep]
        radii = model.range_m * rng.random(len(raw)) ** (1.0 / 3.0)
        accepted.append(raw * radii[:, None])
        total += len(raw)
    return frozen_array(np.concatenate(accepted)[:count])


def wasted_fraction(model: SensorModel, site: BeaconSite, plan: FloorPlan, full_height: bool = False) -> float:
    """Share of the array's coverage volume that falls outside the flight region."""
    local = footprint_samples(model)
    world = np.asarray(site.position) + local @ site.frame
    return float(1.0 - in_drone_region(plan, world, full_height).mean())


__all__ = [
    "Box",
    "FloorPlan",
    "SensorModel",
    "BeaconSite",
    "DroneDomain",
    "BeaconDomain",
    "PlanDocument",
    "SURFACES",
    "CEILING",
    "WALL_X0",
    "WALL_X1",
    "WALL_Y0",
    "WALL_Y1",
    "FREE",
    "DEFAULT_RANGE_M",
    "DEFAULT_HALF_ANGLE_DEG",
    "DEFAULT_TILT_DEG",
    "DEFAULT_AZIMUTH_COUNT",
    "DEFAULT_RESOLUTION_M",
    "rotate_z90",
    "load_plan_document",
    "load_floor_plan",
    "discretize_domains",
    "surface_bounds",
    "site_in_beacon_domain",
    "line_of_sight",
    "line_of_sight_many",
    "world_directions",
    "coverage_mask",
    "beacon_covers",
    "in_drone_region",
    "footprint_samples",
    "wasted_fraction",
]
