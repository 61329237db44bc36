"""Scan trajectories over target surfaces and whole-mission assembly.

Trajectory poses describe the emitter carrier: its local +z points at the
surface (anti-parallel to the polygon normal) and local +x along the current
direction of travel's lane axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dose import TimedTrajectory
from .geometry import Pose2D, Pose3D, frame_quaternion
from .world_model import OccupancyGrid, PolygonDictionary, SurfacePolygon, plan_base_path

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScanPattern:
    standoff: float = 0.02
    lane_spacing: float = 0.10
    speed: float | None = None  # None: derived from exposure

    def __post_init__(self):
        if not self.standoff > 0:
            raise ValueError("ScanPattern.standoff must be > 0")
        if not self.lane_spacing > 0:
            raise ValueError("ScanPattern.lane_spacing must be > 0")
        if self.speed is not None and not self.speed > 0:
            raise ValueError("ScanPattern.speed must be > 0 when set")


class ScanGeometryError(ValueError):
    pass


def _timed(points: np.ndarray, quat, exposure: float) -> TimedTrajectory:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0:
        raise ScanGeometryError("scan path has zero length")
    ts = np.concatenate([[0.0], np.cumsum(seg)]) * (exposure / total)
    ts[-1] = exposure
    q = tuple(quat)
    return TimedTrajectory(tuple((float(t), Pose3D(tuple(p), q)) for t, p in zip(ts, points)))


def _rectangle_axes(polygon: SurfacePolygon):
    c = polygon.corners()
    e1, e2 = c[1] - c[0], c[3] - c[0]
    l1, l2 = np.linalg.norm(e1), np.linalg.norm(e2)
    return c[0], e1, e2, l1, l2


def lane_count(width: float, spacing: float) -> int:
    return int(math.ceil(width / spacing - 1e-9)) + 1


def boustrophedon(polygon: SurfacePolygon, pattern: ScanPattern, exposure: float) -> TimedTrajectory:
    """Back-and-forth lanes parallel to the rectangle's longer side.

    Lanes start on one long edge and finish on the opposite one, spaced at most
    ``lane_spacing`` apart.  Constant speed; the scan lasts exactly ``exposure``.
    """
    if not exposure > 0:
        raise ValueError("exposure must be > 0")
    o, e1, e2, l1, l2 = _rectangle_axes(polygon)
    if l2 > l1 * (1 + 1e-9):
        along, across, length, width = e2, e1, l2, l1
    else:
        along, across, length, width = e1, e2, l1, l2
    if pattern.lane_spacing > width * (1 + 1e-12):
        raise ScanGeometryError(
            f"lane_spacing {pattern.lane_spacing} exceeds rectangle width {width:.6g}; "
            "only a single lane would fit")
    ua, uc = along / length, across / width
    n = np.asarray(polygon.unit_normal)
    lanes = lane_count(width, pattern.lane_spacing)
    pts = []
    for k in range(lanes):
        off = o + uc * (width * k / (lanes - 1)) + pattern.standoff * n
        a, b = off, off + ua * length
        pts.extend((a, b) if k % 2 == 0 else (b, a))
    pts = np.array(pts)
    traj = _timed(pts, frame_quaternion(ua, -n), exposure)
    log.debug("boustrophedon: %d lanes, path %.4f m", lanes, float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()))
    return traj


def _horizontal_direction(polygon: SurfacePolygon) -> tuple[np.ndarray, float]:
    o, e1, e2, l1, l2 = _rectangle_axes(polygon)
    # prefer the rectangle side closest to horizontal; fall back to the longer one
    h1 = abs(e1[2]) / l1 if l1 else 1.0
    h2 = abs(e2[2]) / l2 if l2 else 1.0
    if abs(h1 - h2) > 1e-9:
        return (e1 / l1, l1) if h1 < h2 else (e2 / l2, l2)
    return (e1 / l1, l1) if l1 >= l2 else (e2 / l2, l2)


def line_scan(wall: SurfacePolygon, distance: float, exposure: float) -> TimedTrajectory:
    """Straight pass across the wall's horizontal extent, ``distance`` in front of its centroid."""
    if not distance > 0:
        raise ValueError("distance must be > 0")
    if not exposure > 0:
        raise ValueError("exposure must be > 0")
    direction, extent = _horizontal_direction(wall)
    if extent <= 1e-12:
        raise ScanGeometryError("wall has zero horizontal extent")
    n = np.asarray(wall.unit_normal)
    mid = np.asarray(wall.centroid) + distance * n
    pts = np.array([mid - 0.5 * extent * direction, mid + 0.5 * extent * direction])
    return _timed(pts, frame_quaternion(direction, -n), exposure)


# ---------------------------------------------------------------- missions

@dataclass(frozen=True)
class Mission:
    cell_order: tuple
    approach_poses: tuple
    base_paths: tuple
    scans: tuple
    total_exposure: float


class MissionError(RuntimeError):
    pass


def approach_pose(grid: OccupancyGrid, polygon: SurfacePolygon) -> Pose2D:
    cx, cy = polygon.centroid[0], polygon.centroid[1]
    rc = grid.nearest_free_cell(cx, cy)
    if rc is None:
        raise MissionError(f"no free cell to approach polygon {polygon.id}")
    x, y = grid.cell_to_world(rc)
    return Pose2D(x, y, math.atan2(cy - y, cx - x))


def assemble_mission(order, dictionary: PolygonDictionary, grid: OccupancyGrid, pattern: ScanPattern,
                     per_cell_exposure: float, start: Pose2D) -> Mission:
    """Base legs, approach poses and scans for visiting ``order`` from ``start``."""
    if not per_cell_exposure > 0:
        raise ValueError("per_cell_exposure must be > 0")
    approaches, legs, scans = [], [], []
    prev = start
    for pid in order:
        if pid not in dictionary:
            raise MissionError(f"polygon {pid} is not in the dictionary")
        poly = dictionary[pid]
        goal = approach_pose(grid, poly)
        path = plan_base_path(grid, prev, goal)
        if not path:
            raise MissionError(f"polygon {pid} is unreachable from the previous pose")
        approaches.append(goal)
        legs.append(tuple(path))
        scans.append(boustrophedon(poly, pattern, per_cell_exposure))
        prev = goal
    return Mission(tuple(order), tuple(approaches), tuple(legs), tuple(scans),
                   per_cell_exposure * len(scans))
