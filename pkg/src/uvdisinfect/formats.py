"""File formats: occupancy maps, point clouds, polygon dictionaries, missions,
MOTSP instances and fronts, dose tables, heatmaps and reports.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file and writing it again reproduces it byte for byte.  Every writer goes
through :func:`atomic_write`.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .dose import DisinfectionReport, DoseMap, TimedTrajectory
from .geometry import Pose2D, Pose3D
from .motsp import MotspInstance, ParetoFront
from .segmentation import PointCloud
from .waypoints import Mission
from .world_model import CellState, OccupancyGrid, PolygonDictionary, SurfacePolygon


_UMASK = os.umask(0)
os.umask(_UMASK)


class FormatError(ValueError):
    """Malformed or truncated input file."""


def atomic_write(path, data) -> Path:
    """Write ``data`` (str or bytes) to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else bytes(data)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _f(x: float) -> str:
    return repr(float(x))


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- occupancy grids

_PGM_VALUE = {CellState.OCCUPIED: 0, CellState.UNKNOWN: 205, CellState.FREE: 254}


def _read_pgm(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    tokens, pos = [], 0
    # header: magic, width, height, maxval, with '#' comments
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            pos = data.find(b"\n", pos)
            pos = len(data) if pos < 0 else pos + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii", "replace"))
        pos = end
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise FormatError(f"{path}: unsupported PGM dimensions or depth")
    if magic == "P2":
        vals = data[pos:].split()
        if len(vals) != w * h:
            raise FormatError(f"{path}: expected {w * h} pixels, found {len(vals)}")
        img = np.array([int(v) for v in vals], dtype=np.int64)
    elif magic == "P5":
        body = data[pos + 1:]
        if len(body) < w * h:
            raise FormatError(f"{path}: truncated PGM raster")
        img = np.frombuffer(body[:w * h], dtype=np.uint8).astype(np.int64)
    else:
        raise FormatError(f"{path}: not a PGM file")
    return img.reshape(h, w) * 255 // maxval


def write_occupancy(grid: OccupancyGrid, pgm_path) -> tuple[Path, Path]:
    """ASCII PGM (top image row = highest grid row) plus a YAML sidecar next to it."""
    pgm_path = Path(pgm_path)
    img = np.vectorize(lambda c: _PGM_VALUE[CellState(c)])(grid.cells)[::-1]
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    lines += [" ".join(str(int(v)) for v in row) for row in img]
    atomic_write(pgm_path, "\n".join(lines) + "\n")
    meta = {
        "image": pgm_path.name,
        "resolution": float(grid.resolution),
        "origin": [float(grid.origin.x), float(grid.origin.y), float(grid.origin.theta)],
        "negate": 0,
        "occupied_thresh": 0.65,
        "free_thresh": 0.196,
    }
    side = pgm_path.with_suffix(".yaml")
    atomic_write(side, yaml.safe_dump(meta, sort_keys=True))
    return pgm_path, side


def read_occupancy(path) -> OccupancyGrid:
    """Load a map from its YAML sidecar (or from the PGM, locating the sidecar by stem)."""
    path = Path(path)
    side = path if path.suffix in (".yaml", ".yml") else path.with_suffix(".yaml")
    try:
        meta = yaml.safe_load(side.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise FormatError(f"{side}: {exc}") from exc
    if not isinstance(meta, dict) or not {"image", "resolution", "origin"} <= set(meta):
        raise FormatError(f"{side}: sidecar needs image, resolution and origin")
    img = _read_pgm(side.parent / meta["image"])
    occ_t = float(meta.get("occupied_thresh", 0.65))
    free_t = float(meta.get("free_thresh", 0.196))
    p = img / 255.0 if meta.get("negate", 0) else (255 - img) / 255.0
    cells = np.full(img.shape, CellState.UNKNOWN, np.uint8)
    cells[p > occ_t] = CellState.OCCUPIED
    cells[p < free_t] = CellState.FREE
    ox, oy, oth = (float(v) for v in meta["origin"])
    h, w = img.shape
    return OccupancyGrid(float(meta["resolution"]), w, h, Pose2D(ox, oy, oth), cells[::-1])


# ---------------------------------------------------------------- point clouds

def write_point_cloud(cloud: PointCloud, path) -> Path:
    """Header ``count frame_id px py pz qw qx qy qz`` then one ``x y z`` per line."""
    pose = cloud.sensor_pose
    head = [str(len(cloud)), cloud.frame, *map(_f, pose.position), *map(_f, pose.orientation)]
    lines = [" ".join(head)] + [" ".join(map(_f, p)) for p in cloud.points]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_point_cloud(path) -> PointCloud:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: missing header")
    head = lines[0].split()
    if len(head) not in (2, 9):
        raise FormatError(f"{path}: header must be 'count frame_id' with an optional sensor pose")
    try:
        count = int(head[0])
        pose_vals = [float(v) for v in head[2:]]
    except ValueError as exc:
        raise FormatError(f"{path}: bad header") from exc
    frame = head[1]
    if frame not in ("sensor", "map"):
        raise FormatError(f"{path}: frame_id must be 'sensor' or 'map', got {frame!r}")
    if count < 0 or len(lines) - 1 != count:
        raise FormatError(f"{path}: header declares {count} points, file has {len(lines) - 1}")
    pts = np.empty((count, 3))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 3:
            raise FormatError(f"{path}: line {i + 2} must hold 'x y z'")
        try:
            pts[i] = [float(v) for v in parts]
        except ValueError as exc:
            raise FormatError(f"{path}: line {i + 2}: {exc}") from exc
    if not np.all(np.isfinite(pts)):
        raise FormatError(f"{path}: non-finite coordinates")
    try:
        pose = Pose3D(tuple(pose_vals[:3]), tuple(pose_vals[3:])) if pose_vals else Pose3D()
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return PointCloud(pts, pose, frame)


# ---------------------------------------------------------------- polygons

def polygon_to_dict(p: SurfacePolygon) -> dict:
    return {"id": p.id, "vertices": [list(v) for v in p.vertices], "unit_normal": list(p.unit_normal),
            "centroid": list(p.centroid), "area": p.area}


def polygon_from_dict(d: dict) -> SurfacePolygon:
    return SurfacePolygon(int(d["id"]), d["vertices"], d["unit_normal"], d["centroid"], d["area"])


def dictionary_to_text(d: PolygonDictionary) -> str:
    return _dump_json({"next_id": d.next_id, "polygons": [polygon_to_dict(p) for p in d.entries.values()]})


def write_dictionary(d: PolygonDictionary, path) -> Path:
    return atomic_write(path, dictionary_to_text(d))


def read_dictionary(path) -> PolygonDictionary:
    raw = _load_json(path)
    try:
        polys = [polygon_from_dict(p) for p in raw["polygons"]]
        return PolygonDictionary({p.id: p for p in polys}, int(raw["next_id"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- trajectories and missions

def trajectory_to_list(traj: TimedTrajectory) -> list:
    return [[t, *p.position, *p.orientation] for t, p in traj.samples]


def trajectory_from_list(rows) -> TimedTrajectory:
    samples = []
    for r in rows:
        if len(r) != 8:
            raise ValueError("trajectory samples are [t, x, y, z, qw, qx, qy, qz]")
        samples.append((float(r[0]), Pose3D(tuple(r[1:4]), tuple(r[4:8]))))
    return TimedTrajectory(tuple(samples))


def _pose2d(p: Pose2D) -> list:
    return [p.x, p.y, p.theta]


def mission_to_text(m: Mission) -> str:
    return _dump_json({
        "cell_order": list(m.cell_order),
        "approach_poses": [_pose2d(p) for p in m.approach_poses],
        "base_paths": [[_pose2d(p) for p in leg] for leg in m.base_paths],
        "scans": [trajectory_to_list(s) for s in m.scans],
        "total_exposure": m.total_exposure,
    })


def write_mission(m: Mission, path) -> Path:
    return atomic_write(path, mission_to_text(m))


def read_mission(path) -> Mission:
    raw = _load_json(path)
    try:
        return Mission(tuple(int(i) for i in raw["cell_order"]),
                       tuple(Pose2D(*p) for p in raw["approach_poses"]),
                       tuple(tuple(Pose2D(*p) for p in leg) for leg in raw["base_paths"]),
                       tuple(trajectory_from_list(s) for s in raw["scans"]),
                       float(raw["total_exposure"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- MOTSP

def write_instance(inst: MotspInstance, path) -> Path:
    lines = [str(inst.n)] + [" ".join(map(_f, (*a, *b))) for a, b in zip(inst.coords1, inst.coords2)]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_instance(path) -> MotspInstance:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        n = int(lines[0])
        rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    except (OSError, UnicodeDecodeError, IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if n < 1 or len(rows) != n or any(len(r) != 4 for r in rows):
        raise FormatError(f"{path}: expected {n} lines of 'x1 y1 x2 y2'")
    arr = np.array(rows)
    try:
        return MotspInstance(arr[:, :2], arr[:, 2:])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def front_to_csv(front: ParetoFront) -> str:
    lines = ["f1,f2,tour"]
    lines += [f"{_f(o.f1)},{_f(o.f2)},{' '.join(map(str, t.order))}" for t, o in front.members]
    return "\n".join(lines) + "\n"


def write_front(front: ParetoFront, path) -> Path:
    return atomic_write(path, front_to_csv(front))


def read_front_csv(path) -> list[tuple[float, float, tuple]]:
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not lines or lines[0] != "f1,f2,tour":
        raise FormatError(f"{path}: missing 'f1,f2,tour' header")
    rows = []
    for k, ln in enumerate(lines[1:]):
        try:
            f1, f2, tour = ln.split(",")
            rows.append((float(f1), float(f2), tuple(int(i) for i in tour.split())))
        except ValueError as exc:
            raise FormatError(f"{path}: line {k + 2}: {exc}") from exc
    return rows


# ---------------------------------------------------------------- dose maps

DOSE_HEADER = "i,j,x,y,z,dose_J_per_m2"


@dataclass(frozen=True, eq=False)
class DoseTable:
    """Dose CSV contents: cell indices, cell centres and doses in file order."""

    ij: np.ndarray
    xyz: np.ndarray
    dose: np.ndarray

    @classmethod
    def from_map(cls, dm: DoseMap) -> "DoseTable":
        return cls(dm.grid.index_pairs(), dm.grid.centers(), dm.dose)

    def to_csv(self) -> str:
        lines = [DOSE_HEADER]
        for (i, j), p, d in zip(self.ij, self.xyz, self.dose):
            lines.append(f"{int(i)},{int(j)},{_f(p[0])},{_f(p[1])},{_f(p[2])},{_f(d)}")
        return "\n".join(lines) + "\n"


def write_dose_csv(dm: DoseMap | DoseTable, path) -> Path:
    table = dm if isinstance(dm, DoseTable) else DoseTable.from_map(dm)
    return atomic_write(path, table.to_csv())


def read_dose_csv(path) -> DoseTable:
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not lines or lines[0] != DOSE_HEADER:
        raise FormatError(f"{path}: missing '{DOSE_HEADER}' header")
    n = len(lines) - 1
    ij = np.empty((n, 2), np.int64)
    xyz = np.empty((n, 3))
    dose = np.empty(n)
    for k, ln in enumerate(lines[1:]):
        parts = ln.split(",")
        if len(parts) != 6:
            raise FormatError(f"{path}: line {k + 2} needs 6 fields")
        try:
            ij[k] = (int(parts[0]), int(parts[1]))
            xyz[k] = [float(v) for v in parts[2:5]]
            dose[k] = float(parts[5])
        except ValueError as exc:
            raise FormatError(f"{path}: line {k + 2}: {exc}") from exc
    return DoseTable(ij, xyz, dose)


def heatmap_bytes(dm: DoseMap) -> bytes:
    """Binary PGM, one pixel per cell, row j of the grid per image row, max dose = 255."""
    if dm.grid.n_cells == 0:
        raise ValueError("cannot render a zero-cell dose map")
    img = dm.as_image()
    peak = float(img.max())
    scale = peak / 255.0
    levels = np.zeros(img.shape, np.uint8) if peak == 0 else np.rint(img / peak * 255.0).astype(np.uint8)
    head = f"P5\n# dose_J_per_m2 = level * {_f(scale)}\n{dm.grid.nx} {dm.grid.ny}\n255\n"
    return head.encode() + levels.tobytes()


def write_heatmap(dm: DoseMap, path) -> Path:
    return atomic_write(path, heatmap_bytes(dm))


# ---------------------------------------------------------------- reports

def report_to_dict(r: DisinfectionReport) -> dict:
    return {
        "avg_dose_J_per_m2": r.avg_dose,
        "min_dose_J_per_m2": r.min_dose,
        "max_dose_J_per_m2": r.max_dose,
        "exposure_time_s": r.exposure_time,
        "energy_consumption_W_hr": r.energy_consumption,
        "dpu": r.dpu,
        "coverage": dict(r.coverage),
    }


def report_table(r: DisinfectionReport, label: str = "") -> str:
    """Plain-text row in the layout of a dose/energy summary table."""
    cov = ", ".join(f"{k} {100 * v:.1f}%" for k, v in r.coverage.items())
    rows = [
        ("Source", label or "-"),
        ("Avg. Dose (J/m^2)", f"{r.avg_dose:.1f}"),
        ("Min. Dose (J/m^2)", f"{r.min_dose:.1f}"),
        ("Exposure Time (min)", f"{r.exposure_time / 60:g}"),
        ("Energy Consumption (W*hr)", f"{r.energy_consumption:g}"),
        ("DPU", f"{math.floor(r.dpu * 10) / 10:.1f}"),
        ("Coverage", cov),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"


def write_report(reports: dict, path) -> Path:
    return atomic_write(path, _dump_json(reports))
