"""Labelled synthetic scenes: a floor plus rectangular table tops seen by a depth sensor.

Label 0 is the floor, labels 1..N the tables.  Depth noise is Gaussian along
each sensor ray with standard deviation ``depth_noise * range``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose3D
from .segmentation import PointCloud
from .world_model import SurfacePolygon


@dataclass(frozen=True)
class Table:
    center: tuple      # (x, y) map frame
    size: tuple        # (length, width)
    yaw: float
    height: float

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = 0.5 * self.size[0], 0.5 * self.size[1]
        local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        xy = local @ rot.T + np.asarray(self.center)
        return np.column_stack([xy, np.full(4, self.height)])

    def polygon(self, poly_id: int = 0) -> SurfacePolygon:
        return SurfacePolygon.from_vertices(poly_id, self.corners())

    @property
    def area(self) -> float:
        return self.size[0] * self.size[1]


@dataclass(frozen=True, eq=False)
class Scene:
    cloud: PointCloud       # sensor frame
    labels: np.ndarray      # per point
    tables: tuple
    map_points: np.ndarray  # noise-free map-frame points


def _sample_rect(rng, corners: np.ndarray, density: float) -> np.ndarray:
    e1 = corners[1] - corners[0]
    e2 = corners[3] - corners[0]
    area = np.linalg.norm(e1) * np.linalg.norm(e2)
    n = max(3, int(round(area * density)))
    uv = rng.random((n, 2))
    return corners[0] + uv[:, :1] * e1 + uv[:, 1:] * e2


def _tables_overlap(a: Table, b: Table, gap: float) -> bool:
    ra = 0.5 * math.hypot(*a.size)
    rb = 0.5 * math.hypot(*b.size)
    return math.dist(a.center, b.center) < ra + rb + gap


def random_tables(rng, n_tables: int, sensor_xy=(0.0, 0.0), min_gap: float = 0.4,
                  max_reach: float = 2.2) -> list[Table]:
    """Non-overlapping tables in front of the sensor (+x), fully inside ``max_reach``."""
    tables: list[Table] = []
    attempts = 0
    while len(tables) < n_tables:
        attempts += 1
        if attempts > 10000:
            raise RuntimeError("could not place tables")
        if attempts % 200 == 0:
            tables = []  # early placements can leave no room; start over
        size = (float(rng.uniform(0.5, 0.9)), float(rng.uniform(0.4, 0.7)))
        half_diag = 0.5 * math.hypot(*size)
        r = rng.uniform(0.5 + half_diag, max_reach - half_diag)
        bearing = rng.uniform(-0.45 * math.pi, 0.45 * math.pi)
        t = Table((sensor_xy[0] + r * math.cos(bearing), sensor_xy[1] + r * math.sin(bearing)),
                  size, float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(0.6, 0.8)))
        if all(not _tables_overlap(t, o, min_gap) for o in tables):
            tables.append(t)
    return tables


def make_scene(seed: int, n_tables: int, depth_noise: float = 0.02, density: float = 4000.0,
               sensor_height: float = 1.2, floor_extent: float = 2.5) -> Scene:
    """Floor patch around the sensor plus ``n_tables`` table tops.

    The sensor frame is axis-aligned with the map and sits at
    ``(0, 0, sensor_height)``.
    """
    rng = np.random.default_rng(seed)
    tables = random_tables(rng, n_tables)
    sensor = np.array([0.0, 0.0, sensor_height])
    floor = np.array([[-0.5, -floor_extent, 0.0], [floor_extent, -floor_extent, 0.0],
                      [floor_extent, floor_extent, 0.0], [-0.5, floor_extent, 0.0]])
    parts = [_sample_rect(rng, floor, density)]
    labels = [np.zeros(len(parts[0]), np.int64)]
    for k, t in enumerate(tables, start=1):
        p = _sample_rect(rng, t.corners(), density)
        parts.append(p)
        labels.append(np.full(len(p), k, np.int64))
    pts = np.concatenate(parts)
    lab = np.concatenate(labels)
    # floor hidden under table tops is not visible to the sensor
    vis = np.ones(len(pts), bool)
    for t in tables:
        c = t.corners()
        ray = pts - sensor
        s = (t.height - sensor[2]) / ray[:, 2]
        hit = sensor + s[:, None] * ray
        inside = _inside_rect(hit[:, :2], c[:, :2])
        vis &= ~(inside & (s < 1.0 - 1e-9) & (s > 0))
    pts, lab = pts[vis], lab[vis]
    rel = pts - sensor
    noisy = pts + (rng.normal(0.0, 1.0, len(pts)) * depth_noise)[:, None] * rel
    pose = Pose3D(tuple(sensor))
    cloud = PointCloud(noisy - sensor, pose, "sensor")
    return Scene(cloud, lab, tuple(tables), pts)


def _inside_rect(xy: np.ndarray, c: np.ndarray) -> np.ndarray:
    o = c[0]
    e1, e2 = c[1] - o, c[3] - o
    d = xy - o
    a = d @ e1 / (e1 @ e1)
    b = d @ e2 / (e2 @ e2)
    return (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
