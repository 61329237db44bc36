"""Point cloud to rectangular surface polygons.

Stages: range crop + map transform, voxel downsampling, ground removal,
normal estimation with region growing, and minimum-area rectangle fitting.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose3D
from .planar import convex_hull_2d, min_area_rectangle, plane_basis, polygon_area_2d
from .world_model import PolygonDictionary, SurfacePolygon, dictionary_update

log = logging.getLogger(__name__)

DEFAULT_MAX_RANGE = 2.5
DEFAULT_VOXEL = 0.02
DEFAULT_GROUND_Z = 0.05
DEFAULT_DISTANCE_THRESHOLD = 0.02
DEFAULT_ANGLE_THRESHOLD = math.radians(10.0)
DEFAULT_MIN_INLIERS = 50
DEFAULT_K = 10
ROBUST_EIG_RATIO = 0.1


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    sensor_pose: Pose3D = field(default_factory=Pose3D)
    frame: str = "sensor"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def with_points(self, pts, frame=None) -> "PointCloud":
        return PointCloud(pts, self.sensor_pose, self.frame if frame is None else frame)

    def sensor_origin_map(self) -> np.ndarray:
        return np.asarray(self.sensor_pose.position)


@dataclass(frozen=True, eq=False)
class PlaneSegment:
    coefficients: tuple      # (a, b, c, d), unit normal, normal facing the sensor
    inliers: np.ndarray      # (N, 3) map frame
    label: int
    indices: np.ndarray = None
    viewpoint: tuple | None = None  # sensor origin, map frame

    def __post_init__(self):
        a, b, c, d = (float(v) for v in self.coefficients)
        if abs(math.sqrt(a * a + b * b + c * c) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "coefficients", (a, b, c, d))
        object.__setattr__(self, "inliers", np.asarray(self.inliers, dtype=float).reshape(-1, 3))

    @property
    def normal(self) -> np.ndarray:
        return np.asarray(self.coefficients[:3])

    def distances(self, pts=None) -> np.ndarray:
        pts = self.inliers if pts is None else np.asarray(pts)
        return pts @ self.normal + self.coefficients[3]


# ---------------------------------------------------------------- filters

def preprocess(cloud: PointCloud, max_range: float = DEFAULT_MAX_RANGE) -> PointCloud:
    """Drop points farther than ``max_range`` from the sensor and move the rest to the map frame."""
    if not max_range > 0:
        raise ValueError("max_range must be > 0")
    pts = cloud.points
    if cloud.frame == "sensor":
        keep = np.einsum("ij,ij->i", pts, pts) <= max_range * max_range
        return PointCloud(cloud.sensor_pose.transform_points(pts[keep]), cloud.sensor_pose, "map")
    rel = pts - cloud.sensor_origin_map()
    keep = np.einsum("ij,ij->i", rel, rel) <= max_range * max_range
    return cloud.with_points(pts[keep])


def voxel_downsample(cloud: PointCloud, voxel: float = DEFAULT_VOXEL) -> PointCloud:
    """One centroid per occupied voxel, emitted in order of each voxel's first point."""
    if not voxel > 0:
        raise ValueError("voxel size must be > 0")
    pts = cloud.points
    if len(pts) == 0:
        return cloud.with_points(pts)
    keys = np.floor(pts / voxel).astype(np.int64)
    _, first, inverse, counts = np.unique(keys, axis=0, return_index=True,
                                          return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(first), 3))
    np.add.at(sums, inverse, pts)
    cent = sums / counts[:, None]
    single = counts == 1
    cent[single] = pts[first[single]]
    order = np.argsort(first, kind="stable")
    return cloud.with_points(cent[order])


def remove_ground(cloud: PointCloud, z_max: float = DEFAULT_GROUND_Z) -> PointCloud:
    pts = cloud.points
    return cloud.with_points(pts[pts[:, 2] > z_max])


# ---------------------------------------------------------------- normals + growing

def estimate_normals(pts: np.ndarray, k: int = DEFAULT_K, viewpoint=None,
                     tree: cKDTree | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Principal-axis normals over k-nearest neighbourhoods.

    Returns ``(normals, valid, neighbours)``.  A neighbourhood is rejected as
    non-planar when its smallest/middle eigenvalue ratio exceeds 0.1.  Normals
    are flipped to face ``viewpoint`` when one is given.
    """
    tree = tree or cKDTree(pts)
    _, nbr = tree.query(pts, k=k)
    nbr = np.asarray(nbr).reshape(len(pts), k)
    nb = pts[nbr]
    centred = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = evals[:, 0] / evals[:, 1]
    valid = np.isfinite(ratio) & (ratio <= ROBUST_EIG_RATIO)
    if viewpoint is not None:
        flip = np.einsum("ij,ij->i", np.asarray(viewpoint) - pts, normals) < 0
        normals[flip] *= -1
    return normals, valid, nbr


def _fit_plane(pts: np.ndarray, orient=None) -> tuple[np.ndarray, float]:
    c = pts.mean(axis=0)
    _, vecs = np.linalg.eigh((pts - c).T @ (pts - c))
    n = vecs[:, 0]
    if orient is not None and np.dot(n, orient) < 0:
        n = -n
    return n, -float(n @ c)


def fit_plane_along_rays(pts: np.ndarray, viewpoint, orient=None) -> tuple[np.ndarray, float]:
    """Plane fit for range noise proportional to distance from ``viewpoint``.

    With sensor-centred points ``q`` and the plane written as ``w.q = 1``, each
    residual ``w.q - 1`` is to first order the point's relative range error, so
    ordinary least squares on ``w`` is the matching estimator.  Falls back to
    the orthogonal fit when the plane passes through the viewpoint.
    """
    s = np.asarray(viewpoint, dtype=float)
    q = pts - s
    w, *_ = np.linalg.lstsq(q, np.ones(len(q)), rcond=None)
    norm = float(np.linalg.norm(w))
    if not np.isfinite(norm) or norm < 1e-12:
        return _fit_plane(pts, orient)
    n = w / norm
    d = -1.0 / norm - float(n @ s)
    if orient is not None and np.dot(n, orient) < 0:
        n, d = -n, -d
    return n, d


def segment_planes(cloud: PointCloud,
                   distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD,
                   angle_threshold: float = DEFAULT_ANGLE_THRESHOLD,
                   min_inliers: int = DEFAULT_MIN_INLIERS,
                   k: int = DEFAULT_K) -> list[PlaneSegment]:
    """Region-growing plane segmentation.

    Seeds are taken in ascending point index.  A neighbour joins the growing
    region when its distance to the region's current plane is within
    ``distance_threshold`` and its normal is within ``angle_threshold`` of the
    plane normal.  The plane is refit as the region grows; members left outside
    the threshold by the final fit are pruned.
    """
    if not (distance_threshold > 0 and angle_threshold > 0 and min_inliers > 0):
        raise ValueError("thresholds must be positive")
    pts = cloud.points
    if len(pts) < k:
        raise ValueError(f"cloud has {len(pts)} points, fewer than k={k}")
    viewpoint = cloud.sensor_origin_map() if cloud.frame == "map" else np.zeros(3)
    tree = cKDTree(pts)
    normals, valid, nbr = estimate_normals(pts, k, viewpoint, tree)
    cos_thr = math.cos(angle_threshold)
    state = np.zeros(len(pts), np.int64)   # 0 free, >0 segment label, -1 consumed
    segments = []
    label = 0
    for seed in range(len(pts)):
        if state[seed] != 0 or not valid[seed]:
            continue
        n = normals[seed].copy()
        d = -float(n @ pts[seed])
        members = [seed]
        state[seed] = -2
        queue = deque([seed])
        next_refit = 8
        while queue:
            cur = queue.popleft()
            for j in nbr[cur]:
                if state[j] != 0 or not valid[j]:
                    continue
                if abs(pts[j] @ n + d) > distance_threshold:
                    continue
                if abs(normals[j] @ n) < cos_thr:
                    continue
                state[j] = -2
                members.append(j)
                queue.append(j)
                if len(members) >= next_refit:
                    n, d = _fit_plane(pts[members], n)
                    next_refit = int(len(members) * 1.5) + 1
        members = np.array(members)
        if len(members) >= 3:
            n, d = _fit_plane(pts[members], n)
            keep = np.abs(pts[members] @ n + d) <= distance_threshold
            state[members[~keep]] = -1
            members = members[keep]
        if len(members) < min_inliers:
            state[members] = -1
            continue
        label += 1
        state[members] = label
        members = np.sort(members)
        segments.append(PlaneSegment((*n, d), pts[members], label, members, tuple(viewpoint)))
    log.debug("segment_planes: %d segments from %d points", len(segments), len(pts))
    return segments


# ---------------------------------------------------------------- rectangles

def project_to_plane(pts: np.ndarray, normal: np.ndarray, d: float, viewpoint=None,
                     min_cos: float = 0.05) -> np.ndarray:
    """Map points onto the plane ``n.x + d = 0``.

    With a ``viewpoint`` each point slides along its viewing ray, which undoes
    range noise of a depth sensor; rays within ``acos(min_cos)`` of grazing fall
    back to orthogonal projection.
    """
    n = np.asarray(normal, dtype=float)
    dist = pts @ n + d
    ortho = pts - dist[:, None] * n
    if viewpoint is None:
        return ortho
    s = np.asarray(viewpoint, dtype=float)
    ray = pts - s
    denom = ray @ n
    norm = np.linalg.norm(ray, axis=1)
    ok = np.abs(denom) > min_cos * np.maximum(norm, 1e-300)
    t = np.where(ok, -(s @ n + d) / np.where(ok, denom, 1.0), 0.0)
    along = s + t[:, None] * ray
    return np.where(ok[:, None], along, ortho)


def _hull_area_on(pts: np.ndarray, normal: np.ndarray) -> float:
    u, v, _ = plane_basis(normal)
    return polygon_area_2d(convex_hull_2d(np.column_stack([pts @ u, pts @ v])))


def fit_rectangle(segment: PlaneSegment, poly_id: int = 0, hypotheses=None) -> SurfacePolygon:
    """Minimum-area bounding rectangle of the segment's inliers, in its plane.

    Candidate planes are the segment's own plane and the orthogonal
    least-squares plane of its inliers, plus any ``hypotheses``; the one whose
    projected hull is largest wins.  When the segment records its viewpoint the
    first two are replaced by the range-noise fit and inliers are projected
    along their viewing rays.
    """
    pts = segment.inliers
    if len(pts) < 3:
        raise ValueError("need at least 3 inliers")
    seg_n = segment.normal
    vp = segment.viewpoint
    if vp is not None:
        cands = [fit_plane_along_rays(pts, vp, seg_n)]
    else:
        cands = [(seg_n, segment.coefficients[3]), _fit_plane(pts, seg_n)]
    for h in hypotheses or ():
        h = np.asarray(h, dtype=float)
        h = h / np.linalg.norm(h)
        if np.dot(h, seg_n) < 0:
            h = -h
        cands.append((h, -float(h @ pts.mean(axis=0))))
    best = max(cands, key=lambda nd: _hull_area_on(pts, nd[0]))
    n, d = best
    n = np.asarray(n) / np.linalg.norm(n)
    u, v, _ = plane_basis(n)
    proj = project_to_plane(pts, n, d, vp)
    p2 = np.column_stack([proj @ u, proj @ v])
    rect, _ = min_area_rectangle(p2)
    # plane point under the 2-D origin
    base = -d * n
    corners = base + rect[:, :1] * u + rect[:, 1:] * v
    return SurfacePolygon.from_vertices(poly_id, corners, normal=n)


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class PipelineConfig:
    """Stage parameters for whole-pipeline runs.

    Defaults suit a depth camera with range noise of about 2% of distance:
    wider neighbourhoods keep normals planar enough for the eigenvalue filter,
    and the ground cut clears floor points several noise widths up.
    """

    max_range: float = DEFAULT_MAX_RANGE
    voxel: float = 0.025
    ground_z: float = 0.12
    distance_threshold: float = 0.03
    angle_threshold: float = math.radians(15.0)
    min_inliers: int = DEFAULT_MIN_INLIERS
    k: int = 80
    horizontal_only: bool = False
    max_tilt: float = math.radians(20.0)


def extract_polygons(cloud: PointCloud, cfg: PipelineConfig = PipelineConfig()) -> list[SurfacePolygon]:
    c = preprocess(cloud, cfg.max_range)
    c = voxel_downsample(c, cfg.voxel)
    c = remove_ground(c, cfg.ground_z)
    if len(c) < cfg.k:
        return []
    segments = segment_planes(c, cfg.distance_threshold, cfg.angle_threshold, cfg.min_inliers, cfg.k)
    polys = []
    for seg in segments:
        if cfg.horizontal_only and abs(seg.normal[2]) < math.cos(cfg.max_tilt):
            continue
        try:
            polys.append(fit_rectangle(seg, len(polys)))
        except ValueError:
            log.debug("skipping degenerate segment %d", seg.label)
    return polys


def update_dictionary(d: PolygonDictionary, cloud: PointCloud,
                      cfg: PipelineConfig = PipelineConfig()) -> PolygonDictionary:
    for poly in extract_polygons(cloud, cfg):
        d = dictionary_update(d, poly)
    return d
