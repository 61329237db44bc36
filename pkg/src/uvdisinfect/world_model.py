"""Environment representation: occupancy grid, target polygons, polygon dictionary.

The dictionary keeps one entry per physical surface.  A re-detected polygon
is *associated* with a stored one when their centroids are within
``CENTROID_RADIUS`` and at least one matched pair of rectangle corners is
within ``CORNER_RADIUS``; the larger of the two is kept.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Mapping

import numpy as np

from .geometry import Pose2D
from .planar import min_area_rectangle, plane_basis, polygon_area_2d

CENTROID_RADIUS = 1.3
CORNER_RADIUS = 0.30
_ASSOC_EPS = 1e-9


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Row ``r`` covers y in ``[r, r+1) * resolution`` of the grid frame; column ``c`` likewise in x."""

    resolution: float
    width: int
    height: int
    origin: Pose2D
    cells: np.ndarray  # (height, width) of CellState codes

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("OccupancyGrid.resolution must be > 0")
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.size != self.width * self.height:
            raise ValueError("OccupancyGrid.cells must have width*height entries")
        cells = cells.reshape(self.height, self.width).copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float = 0.05,
              origin: Pose2D = Pose2D(0.0, 0.0, 0.0)) -> "OccupancyGrid":
        return cls(resolution, width, height, origin, np.zeros((height, width), np.uint8))

    def __eq__(self, other):
        return (isinstance(other, OccupancyGrid) and self.resolution == other.resolution
                and self.width == other.width and self.height == other.height
                and self.origin == other.origin and np.array_equal(self.cells, other.cells))

    def in_bounds(self, rc) -> bool:
        r, c = rc
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, rc) -> bool:
        return self.in_bounds(rc) and self.cells[rc[0], rc[1]] == CellState.FREE

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ct, st = math.cos(self.origin.theta), math.sin(self.origin.theta)
        dx, dy = x - self.origin.x, y - self.origin.y
        gx = ct * dx + st * dy
        gy = -st * dx + ct * dy
        return int(math.floor(gy / self.resolution)), int(math.floor(gx / self.resolution))

    def cell_to_world(self, rc) -> tuple[float, float]:
        r, c = rc
        gx = (c + 0.5) * self.resolution
        gy = (r + 0.5) * self.resolution
        ct, st = math.cos(self.origin.theta), math.sin(self.origin.theta)
        return self.origin.x + ct * gx - st * gy, self.origin.y + st * gx + ct * gy

    def nearest_free_cell(self, x: float, y: float) -> tuple[int, int] | None:
        """Free cell whose centre is closest to (x, y); ties go to the lowest (row, col)."""
        free = np.argwhere(self.cells == CellState.FREE)
        if len(free) == 0:
            return None
        # distances in cell units from the query point to cell centres
        ct, st = math.cos(self.origin.theta), math.sin(self.origin.theta)
        dx, dy = x - self.origin.x, y - self.origin.y
        gx = (ct * dx + st * dy) / self.resolution
        gy = (-st * dx + ct * dy) / self.resolution
        d2 = (free[:, 1] + 0.5 - gx) ** 2 + (free[:, 0] + 0.5 - gy) ** 2
        best = d2.min()
        cand = free[d2 <= best + 1e-12]
        r, c = min(map(tuple, cand))
        return int(r), int(c)


# ---------------------------------------------------------------- polygons

@dataclass(frozen=True)
class SurfacePolygon:
    id: int
    vertices: tuple
    unit_normal: tuple
    centroid: tuple
    area: float

    def __post_init__(self):
        verts = tuple(tuple(float(c) for c in v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "unit_normal", tuple(float(c) for c in self.unit_normal))
        object.__setattr__(self, "centroid", tuple(float(c) for c in self.centroid))
        object.__setattr__(self, "area", float(self.area))
        validate_polygon(self)

    @classmethod
    def from_vertices(cls, id: int, vertices, normal=None) -> "SurfacePolygon":
        """Build a polygon, deriving normal (Newell), area centroid and area.

        If ``normal`` is given the vertex winding is not used for orientation and
        the supplied direction is kept.
        """
        v = np.asarray(vertices, dtype=float)
        if len(v) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
        newell = np.zeros(3)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            newell += np.array([(a[1] - b[1]) * (a[2] + b[2]),
                                (a[2] - b[2]) * (a[0] + b[0]),
                                (a[0] - b[0]) * (a[1] + b[1])])
        if normal is None:
            if np.linalg.norm(newell) == 0:
                raise ValueError("degenerate polygon")
            n = newell / np.linalg.norm(newell)
        else:
            n = np.asarray(normal, dtype=float)
            n = n / np.linalg.norm(n)
        u, w, _ = plane_basis(n)
        o = v.mean(axis=0)
        p2 = np.column_stack([(v - o) @ u, (v - o) @ w])
        x, y = p2[:, 0], p2[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a_signed = 0.5 * cr.sum()
        if a_signed == 0:
            raise ValueError("degenerate polygon")
        cx = ((x + xn) * cr).sum() / (6 * a_signed)
        cy = ((y + yn) * cr).sum() / (6 * a_signed)
        centroid = o + cx * u + cy * w
        return cls(id, tuple(map(tuple, v)), tuple(n), tuple(centroid), abs(a_signed))

    def plane_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vertices in an in-plane 2-D frame, plus the (u, v) axes used."""
        u, w, _ = plane_basis(self.unit_normal)
        v = np.asarray(self.vertices) - np.asarray(self.centroid)
        return np.column_stack([v @ u, v @ w]), u, w

    def corners(self) -> np.ndarray:
        """The 4 corners of the minimum-area bounding rectangle, in 3-D."""
        if len(self.vertices) == 4 and _is_rectangle(np.asarray(self.vertices)):
            return np.asarray(self.vertices)
        p2, u, w = self.plane_coords()
        rect, _ = min_area_rectangle(p2)
        return np.asarray(self.centroid) + rect[:, :1] * u + rect[:, 1:] * w


def _is_rectangle(v: np.ndarray, tol: float = 1e-9) -> bool:
    e = np.roll(v, -1, axis=0) - v
    scale = max(np.linalg.norm(e, axis=1).max(), 1e-300)
    for k in range(4):
        if abs(np.dot(e[k], e[(k + 1) % 4])) > tol * scale * scale:
            return False
    return True


def validate_polygon(p: SurfacePolygon) -> None:
    """Raise ``ValueError`` if ``p`` breaks a SurfacePolygon invariant."""
    v = np.asarray(p.vertices, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 3:
        raise ValueError("polygon needs >= 3 vertices in 3-D")
    if not np.all(np.isfinite(v)):
        raise ValueError("polygon vertices must be finite")
    n = np.asarray(p.unit_normal)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("polygon normal must have unit length")
    c = np.asarray(p.centroid)
    if np.max(np.abs((v - c) @ n)) > 1e-3:
        raise ValueError("polygon vertices are not coplanar within 1 mm")
    if not p.area > 0:
        raise ValueError("polygon area must be positive")
    u, w, _ = plane_basis(n)
    shoelace = polygon_area_2d(np.column_stack([(v - c) @ u, (v - c) @ w]))
    if abs(shoelace - p.area) > 1e-9 * shoelace:
        raise ValueError("polygon area disagrees with vertex shoelace area")


def match_corners(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, float]]:
    """Greedy nearest-pair matching of two corner sets; pairs in pick order."""
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    pairs = sorted((d[i, j], i, j) for i in range(len(a)) for j in range(len(b)))
    used_a, used_b, out = set(), set(), []
    for dist, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        out.append((i, j, float(dist)))
    return out


def polygons_associated(a: SurfacePolygon, b: SurfacePolygon) -> bool:
    dc = float(np.linalg.norm(np.asarray(a.centroid) - np.asarray(b.centroid)))
    if dc > CENTROID_RADIUS + _ASSOC_EPS:
        return False
    pairs = match_corners(a.corners(), b.corners())
    return any(dist <= CORNER_RADIUS + _ASSOC_EPS for _, _, dist in pairs)


@dataclass(frozen=True)
class PolygonDictionary:
    entries: Mapping[int, SurfacePolygon] = field(default_factory=dict)
    next_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))
        if self.entries and self.next_id <= max(self.entries):
            object.__setattr__(self, "next_id", max(self.entries) + 1)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key):
        return self.entries[key]

    def __contains__(self, key):
        return key in self.entries

    def ids(self) -> list[int]:
        return list(self.entries)


def dictionary_update(d: PolygonDictionary, candidate: SurfacePolygon) -> PolygonDictionary:
    """Insert ``candidate`` or let it replace the entries it associates with if it is larger."""
    validate_polygon(candidate)
    matched = [k for k, p in d.entries.items() if polygons_associated(p, candidate)]
    if not matched:
        entries = dict(d.entries)
        entries[d.next_id] = replace(candidate, id=d.next_id)
        return PolygonDictionary(entries, d.next_id + 1)
    if candidate.area <= max(d.entries[k].area for k in matched):
        return d
    keep = min(matched)
    entries = {k: p for k, p in d.entries.items() if k not in matched}
    entries[keep] = replace(candidate, id=keep)
    return PolygonDictionary(entries, d.next_id)


# ---------------------------------------------------------------- base planning

_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
SQRT2 = math.sqrt(2.0)


def grid_neighbors(grid: OccupancyGrid, rc):
    """8-connected free neighbours with step cost in cells.

    Diagonal steps need both orthogonally adjacent cells free (no corner cutting).
    """
    r, c = rc
    for dr, dc in _MOVES:
        nb = (r + dr, c + dc)
        if not grid.is_free(nb):
            continue
        if dr and dc:
            if not (grid.is_free((r + dr, c)) and grid.is_free((r, c + dc))):
                continue
            yield nb, SQRT2
        else:
            yield nb, 1.0


def astar_cells(grid: OccupancyGrid, start, goal) -> tuple[list, float]:
    """Shortest 8-connected cell path; ``([], inf)`` when unreachable. Cost in metres."""
    start, goal = tuple(start), tuple(goal)
    if start == goal:
        return [start], 0.0

    def h(rc):
        return math.hypot(rc[0] - goal[0], rc[1] - goal[1])

    g = {start: 0.0}
    parent = {start: None}
    tie = 0
    heap = [(h(start), tie, start)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            break
        closed.add(cur)
        for nb, step in grid_neighbors(grid, cur):
            ng = g[cur] + step
            if ng < g.get(nb, math.inf) - 1e-12:
                g[nb] = ng
                parent[nb] = cur
                tie += 1
                heapq.heappush(heap, (ng + h(nb), tie, nb))
    if goal not in parent:
        return [], math.inf
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path, g[goal] * grid.resolution


def _check_endpoint(grid: OccupancyGrid, pose: Pose2D, name: str):
    rc = grid.world_to_cell(pose.x, pose.y)
    if not grid.in_bounds(rc):
        raise ValueError(f"{name} pose lies outside the grid")
    if grid.cells[rc] != CellState.FREE:
        raise ValueError(f"{name} pose is not on a free cell")
    return rc


def plan_base_path(grid: OccupancyGrid, start: Pose2D, goal: Pose2D) -> list[Pose2D]:
    """A* base path from ``start`` to ``goal``; an empty list means unreachable.

    Intermediate poses sit at cell centres and face the next pose.
    """
    s = _check_endpoint(grid, start, "start")
    t = _check_endpoint(grid, goal, "goal")
    cells, _ = astar_cells(grid, s, t)
    if not cells:
        return []
    if len(cells) == 1:
        return [start] if start == goal else [start, goal]
    pts = [(start.x, start.y)] + [grid.cell_to_world(rc) for rc in cells[1:-1]] + [(goal.x, goal.y)]
    poses = [start]
    for k in range(1, len(pts) - 1):
        nx, ny = pts[k + 1]
        x, y = pts[k]
        poses.append(Pose2D(x, y, math.atan2(ny - y, nx - x)))
    poses.append(goal)
    return poses


def path_length(path: list[Pose2D]) -> float:
    return sum(a.distance_to(b) for a, b in zip(path, path[1:]))
