"""Scenario files: sources, target surfaces, motion and run settings in YAML.

A scenario names either an explicit ``trajectory`` or a ``generator`` that
builds one per surface.  ``load_scenario`` reports every problem it finds with
the dotted path of the offending field.

Example::

    name: table
    exposure: 360
    sources:
      - type: led_panel
    surfaces:
      - id: 0
        vertices: [[0, 0, 0.5], [1, 0, 0.5], [1, 1, 0.5], [0, 1, 0.5]]
    generator: {type: boustrophedon, standoff: 0.02, lane_spacing: 0.1}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dose import DEFAULT_CELL_SIZE, DEFAULT_DT, PathogenDoseTable, TimedTrajectory
from .geometry import Pose2D, Pose3D
from .irradiance import LedPanelSource, TubeLampBankSource, default_lamp_poses
from .waypoints import ScanGeometryError, ScanPattern, boustrophedon, line_scan
from .world_model import SurfacePolygon


class ScenarioError(ValueError):
    """Validation failure; ``errors`` is a list of ``(field_path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))

    def records(self) -> list[dict]:
        return [{"field": p, "message": m} for p, m in self.errors]


@dataclass(frozen=True)
class SurfaceSpec:
    id: int
    vertices: tuple
    normal: tuple | None = None

    def polygon(self) -> SurfacePolygon:
        return SurfacePolygon.from_vertices(self.id, self.vertices, self.normal)


@dataclass(frozen=True)
class GeneratorSpec:
    type: str                      # "boustrophedon" or "line_scan"
    standoff: float = 0.02
    lane_spacing: float = 0.10
    distance: float = 1.0

    def trajectory(self, polygon: SurfacePolygon, exposure: float) -> TimedTrajectory:
        if self.type == "boustrophedon":
            return boustrophedon(polygon, ScanPattern(self.standoff, self.lane_spacing), exposure)
        return line_scan(polygon, self.distance, exposure)


@dataclass(frozen=True)
class PlanSpec:
    map: str                       # occupancy map sidecar, relative to the scenario file
    start: Pose2D
    n_weights: int = 51


@dataclass(frozen=True)
class Scenario:
    name: str
    sources: tuple
    exposure: float
    surfaces: tuple = ()
    point_cloud: str | None = None
    trajectory: TimedTrajectory | None = None
    generator: GeneratorSpec | None = None
    dt: float = DEFAULT_DT
    cell_size: float = DEFAULT_CELL_SIZE
    pathogens: PathogenDoseTable = field(default_factory=PathogenDoseTable)
    seed: int = 0
    plan: PlanSpec | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    def polygons(self) -> list[SurfacePolygon]:
        return [s.polygon() for s in self.surfaces]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def trajectory_for(self, polygon: SurfacePolygon) -> TimedTrajectory:
        if self.trajectory is not None:
            return self.trajectory
        return self.generator.trajectory(polygon, self.exposure)


# ---------------------------------------------------------------- parsing

_TOP_KEYS = {"name", "sources", "surfaces", "point_cloud", "trajectory", "generator", "exposure",
             "dt", "cell_size", "pathogens", "seed", "plan"}


def _finite(v) -> bool:
    try:
        return math.isfinite(v)
    except OverflowError:  # integers beyond float range
        return False


class _Checker:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def fail(self, path, msg):
        self.errors.append((path, msg))

    def keys(self, d, allowed, path):
        for k in d:
            if k not in allowed:
                self.fail(f"{path}.{k}" if path else str(k), "unknown field")

    def number(self, d, key, path, default=None, *, gt=None, ge=None, integer=False, required=False):
        full = f"{path}.{key}" if path else key
        if key not in d:
            if required:
                self.fail(full, "required field is missing")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(full, f"expected a number, got {type(v).__name__}")
            return default
        if integer and not (isinstance(v, int) or float(v).is_integer()):
            self.fail(full, "expected an integer")
            return default
        if not _finite(v):
            self.fail(full, "must be finite")
            return default
        if gt is not None and not v > gt:
            self.fail(full, f"must be > {gt}")
            return default
        if ge is not None and not v >= ge:
            self.fail(full, f"must be >= {ge}")
            return default
        return int(v) if integer else float(v)

    def vector(self, v, n, path):
        if (not isinstance(v, (list, tuple)) or len(v) != n
                or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)):
            self.fail(path, f"expected a list of {n} numbers")
            return None
        if not all(_finite(c) for c in v):
            self.fail(path, "components must be finite")
            return None
        return tuple(float(c) for c in v)

    def mapping(self, v, path):
        if not isinstance(v, dict):
            self.fail(path, f"expected a mapping, got {type(v).__name__}")
            return None
        return v

    def pose(self, v, path) -> Pose3D | None:
        d = self.mapping(v, path)
        if d is None:
            return None
        self.keys(d, {"position", "orientation"}, path)
        pos = self.vector(d.get("position", [0.0, 0.0, 0.0]), 3, f"{path}.position")
        q = self.vector(d.get("orientation", [1.0, 0.0, 0.0, 0.0]), 4, f"{path}.orientation")
        if pos is None or q is None:
            return None
        if abs(math.sqrt(sum(c * c for c in q)) - 1.0) > 1e-9:
            self.fail(f"{path}.orientation", "quaternion must have unit norm")
            return None
        return Pose3D(pos, q)


def _parse_source(ck: _Checker, raw, path):
    d = ck.mapping(raw, path)
    if d is None:
        return None
    kind = d.get("type")
    if kind == "led_panel":
        ck.keys(d, {"type", "grid", "panel_side", "per_led_radiant_power", "electrical_wattage", "pose"}, path)
        grid = ck.number(d, "grid", path, 5, ge=1, integer=True)
        side = ck.number(d, "panel_side", path, 0.025, gt=0)
        p = ck.number(d, "per_led_radiant_power", path, 0.028, ge=0)
        w = ck.number(d, "electrical_wattage", path, 30.0, gt=0)
        pose = ck.pose(d["pose"], f"{path}.pose") if "pose" in d else Pose3D()
        if None in (grid, side, p, w, pose):
            return None
        return LedPanelSource(grid, side, p, w, pose)
    if kind == "lamp_bank":
        ck.keys(d, {"type", "lamp_count", "lamp_length", "per_lamp_radiant_power", "per_lamp_wattage",
                    "segment_count", "poses"}, path)
        count = ck.number(d, "lamp_count", path, 5, ge=1, integer=True)
        length = ck.number(d, "lamp_length", path, 1.19, gt=0)
        p = ck.number(d, "per_lamp_radiant_power", path, 27.0, ge=0)
        w = ck.number(d, "per_lamp_wattage", path, 115.0, gt=0)
        segs = ck.number(d, "segment_count", path, 64, ge=1, integer=True)
        poses = None
        if "poses" in d:
            if not isinstance(d["poses"], list):
                ck.fail(f"{path}.poses", "expected a list of poses")
                return None
            poses = [ck.pose(q, f"{path}.poses[{i}]") for i, q in enumerate(d["poses"])]
            if any(q is None for q in poses):
                return None
            if count is not None and len(poses) != count:
                ck.fail(f"{path}.poses", f"expected {count} poses, got {len(poses)}")
                return None
        if None in (count, length, p, w, segs):
            return None
        return TubeLampBankSource(count, length, p, w, segs, poses)
    ck.fail(f"{path}.type", f"expected 'led_panel' or 'lamp_bank', got {kind!r}")
    return None


def _parse_surface(ck: _Checker, raw, path, index):
    d = ck.mapping(raw, path)
    if d is None:
        return None
    ck.keys(d, {"id", "vertices", "normal"}, path)
    sid = ck.number(d, "id", path, index, ge=0, integer=True)
    verts = d.get("vertices")
    if not isinstance(verts, list) or len(verts) < 3:
        ck.fail(f"{path}.vertices", "expected a list of at least 3 points")
        return None
    vs = [ck.vector(v, 3, f"{path}.vertices[{i}]") for i, v in enumerate(verts)]
    normal = ck.vector(d["normal"], 3, f"{path}.normal") if "normal" in d else None
    if any(v is None for v in vs) or sid is None or ("normal" in d and normal is None):
        return None
    if normal is not None and math.sqrt(sum(c * c for c in normal)) == 0:
        ck.fail(f"{path}.normal", "must be non-zero")
        return None
    spec = SurfaceSpec(sid, tuple(vs), normal)
    try:
        spec.polygon()
    except ValueError as exc:
        ck.fail(path, str(exc))
        return None
    return spec


def _parse_trajectory(ck: _Checker, raw, path):
    d = ck.mapping(raw, path)
    if d is None:
        return None
    ck.keys(d, {"samples"}, path)
    rows = d.get("samples")
    if not isinstance(rows, list) or len(rows) < 2:
        ck.fail(f"{path}.samples", "expected at least two [t, x, y, z, qw, qx, qy, qz] rows")
        return None
    samples = []
    for i, r in enumerate(rows):
        v = ck.vector(r, 8, f"{path}.samples[{i}]")
        if v is None:
            return None
        q = v[4:]
        if abs(math.sqrt(sum(c * c for c in q)) - 1.0) > 1e-9:
            ck.fail(f"{path}.samples[{i}]", "quaternion must have unit norm")
            return None
        samples.append((v[0], Pose3D(v[1:4], q)))
    ts = [t for t, _ in samples]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        ck.fail(f"{path}.samples", "times must be strictly increasing")
        return None
    return TimedTrajectory(tuple(samples))


def _parse_generator(ck: _Checker, raw, path):
    d = ck.mapping(raw, path)
    if d is None:
        return None
    kind = d.get("type")
    if kind == "boustrophedon":
        ck.keys(d, {"type", "standoff", "lane_spacing"}, path)
        so = ck.number(d, "standoff", path, 0.02, gt=0)
        ls = ck.number(d, "lane_spacing", path, 0.10, gt=0)
        return None if None in (so, ls) else GeneratorSpec(kind, standoff=so, lane_spacing=ls)
    if kind == "line_scan":
        ck.keys(d, {"type", "distance"}, path)
        dist = ck.number(d, "distance", path, 1.0, gt=0)
        return None if dist is None else GeneratorSpec(kind, distance=dist)
    ck.fail(f"{path}.type", f"expected 'boustrophedon' or 'line_scan', got {kind!r}")
    return None


def _parse_plan(ck: _Checker, raw, path):
    d = ck.mapping(raw, path)
    if d is None:
        return None
    ck.keys(d, {"map", "start", "n_weights"}, path)
    m = d.get("map")
    if not isinstance(m, str) or not m:
        ck.fail(f"{path}.map", "expected a map sidecar path")
        m = None
    start = ck.vector(d.get("start", [0.0, 0.0, 0.0]), 3, f"{path}.start")
    nw = ck.number(d, "n_weights", path, 51, ge=2, integer=True)
    if None in (m, start, nw):
        return None
    return PlanSpec(m, Pose2D(*start), nw)


def parse_scenario(raw, base_dir=".") -> Scenario:
    ck = _Checker()
    if not isinstance(raw, dict):
        raise ScenarioError([("", "scenario must be a mapping")])
    ck.keys(raw, _TOP_KEYS, "")
    name = raw.get("name", "scenario")
    if not isinstance(name, str):
        ck.fail("name", "expected a string")
    exposure = ck.number(raw, "exposure", "", required=True, gt=0)
    dt = ck.number(raw, "dt", "", DEFAULT_DT, gt=0)
    cell = ck.number(raw, "cell_size", "", DEFAULT_CELL_SIZE, gt=0)
    seed = ck.number(raw, "seed", "", 0, ge=0, integer=True)
    if exposure is not None and dt is not None and dt > exposure:
        ck.fail("dt", "must not exceed exposure")

    sources = []
    if not isinstance(raw.get("sources"), list) or not raw["sources"]:
        ck.fail("sources", "expected a non-empty list of sources")
    else:
        sources = [_parse_source(ck, s, f"sources[{i}]") for i, s in enumerate(raw["sources"])]

    surfaces = []
    if "surfaces" in raw:
        if not isinstance(raw["surfaces"], list):
            ck.fail("surfaces", "expected a list of polygons")
        else:
            surfaces = [_parse_surface(ck, s, f"surfaces[{i}]", i) for i, s in enumerate(raw["surfaces"])]
            ids = [s.id for s in surfaces if s is not None]
            if len(set(ids)) != len(ids):
                ck.fail("surfaces", "surface ids must be unique")
    cloud = raw.get("point_cloud")
    if cloud is not None and (not isinstance(cloud, str) or not cloud):
        ck.fail("point_cloud", "expected a file path")
    if not surfaces and cloud is None:
        ck.fail("surfaces", "give surfaces or a point_cloud reference")
    if surfaces and cloud is not None:
        ck.fail("point_cloud", "give either surfaces or a point_cloud, not both")

    has_t, has_g = "trajectory" in raw, "generator" in raw
    traj = gen = None
    if has_t == has_g:
        ck.fail("trajectory", "exactly one of trajectory or generator is required")
    elif has_t:
        traj = _parse_trajectory(ck, raw["trajectory"], "trajectory")
        if traj is not None and exposure is not None and abs(traj.duration - exposure) > 1e-9 * exposure:
            ck.fail("trajectory", f"duration {traj.duration!r} differs from exposure {exposure!r}")
    else:
        gen = _parse_generator(ck, raw["generator"], "generator")

    pathogens = PathogenDoseTable()
    if "pathogens" in raw:
        pd = ck.mapping(raw["pathogens"], "pathogens")
        if pd is not None:
            entries = dict(pathogens.entries)
            for k in pd:
                v = ck.number(pd, k, "pathogens", gt=0)
                if v is not None:
                    entries[str(k)] = v
            pathogens = PathogenDoseTable(entries)

    plan = _parse_plan(ck, raw["plan"], "plan") if "plan" in raw else None

    if gen is not None and exposure is not None and not ck.errors:
        for i, spec in enumerate(surfaces):
            try:
                gen.trajectory(spec.polygon(), exposure)
            except ScanGeometryError as exc:
                field_name = "lane_spacing" if gen.type == "boustrophedon" else "type"
                ck.fail(f"generator.{field_name}", f"surface {spec.id}: {exc}")

    if ck.errors:
        raise ScenarioError(ck.errors)
    return Scenario(name, tuple(sources), exposure, tuple(surfaces), cloud, traj, gen, dt, cell,
                    pathogens, seed, plan, Path(base_dir))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError([("", f"cannot read {path}: {exc.strerror or exc}")]) from exc
    except (yaml.YAMLError, UnicodeDecodeError) as exc:
        raise ScenarioError([("", f"not valid YAML: {exc}")]) from exc
    return parse_scenario(raw, path.parent)


# ---------------------------------------------------------------- writing

def _pose_dict(p: Pose3D) -> dict:
    return {"position": list(p.position), "orientation": list(p.orientation)}


def _source_dict(s) -> dict:
    if isinstance(s, LedPanelSource):
        return {"type": "led_panel", "grid": s.grid, "panel_side": s.panel_side,
                "per_led_radiant_power": s.per_led_radiant_power,
                "electrical_wattage": s.electrical_wattage, "pose": _pose_dict(s.pose)}
    d = {"type": "lamp_bank", "lamp_count": s.lamp_count, "lamp_length": s.lamp_length,
         "per_lamp_radiant_power": s.per_lamp_radiant_power, "per_lamp_wattage": s.per_lamp_wattage,
         "segment_count": s.segment_count}
    if tuple(s.poses) != default_lamp_poses(s.lamp_count):
        d["poses"] = [_pose_dict(p) for p in s.poses]
    return d


def scenario_to_dict(sc: Scenario) -> dict:
    d = {"name": sc.name, "exposure": sc.exposure, "dt": sc.dt, "cell_size": sc.cell_size,
         "seed": sc.seed, "sources": [_source_dict(s) for s in sc.sources],
         "pathogens": dict(sc.pathogens.entries)}
    if sc.surfaces:
        d["surfaces"] = []
        for s in sc.surfaces:
            e = {"id": s.id, "vertices": [list(v) for v in s.vertices]}
            if s.normal is not None:
                e["normal"] = list(s.normal)
            d["surfaces"].append(e)
    if sc.point_cloud is not None:
        d["point_cloud"] = sc.point_cloud
    if sc.trajectory is not None:
        d["trajectory"] = {"samples": [[t, *p.position, *p.orientation] for t, p in sc.trajectory.samples]}
    if sc.generator is not None:
        g = sc.generator
        d["generator"] = ({"type": g.type, "standoff": g.standoff, "lane_spacing": g.lane_spacing}
                          if g.type == "boustrophedon" else {"type": g.type, "distance": g.distance})
    if sc.plan is not None:
        p = sc.plan
        d["plan"] = {"map": p.map, "start": [p.start.x, p.start.y, p.start.theta], "n_weights": p.n_weights}
    return d


def scenario_to_text(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=True, default_flow_style=None, width=100)


def rectangle_vertices(center, u, v) -> list:
    """Corners ``center -/+ u/2 -/+ v/2`` in counter-clockwise order about ``u x v``."""
    c, u, v = (np.asarray(x, dtype=float) for x in (center, u, v))
    return [list(c - u / 2 - v / 2), list(c + u / 2 - v / 2), list(c + u / 2 + v / 2), list(c - u / 2 + v / 2)]
