"""UV dose accumulation over a target surface and the disinfection report.

Dose at a surface cell is the time integral of irradiance, ``D = sum_k E(t_k) dt``
(left-endpoint rule), with the carrier pose interpolated between trajectory
samples.  A light source's own ``pose`` is its mount offset relative to the
carrier frame that the trajectory moves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._kernels import accumulate_dose
from .geometry import Pose3D, quat_to_matrix, slerp
from .irradiance import EmitterSet, LightSource, SurfaceSample, electrical_power, emitters, radiant_power
from .planar import plane_basis
from .world_model import SurfacePolygon

log = logging.getLogger(__name__)

DEFAULT_DT = 0.05
DEFAULT_CELL_SIZE = 0.01
_CHUNK_STEPS = 1024


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Regular tiling of a rectangular polygon.

    Cell (i, j) is column ``i`` along ``u_axis`` and row ``j`` along ``v_axis``;
    flat cell order is row-major (``index = j * nx + i``).  When a side is not an
    integer multiple of ``cell_size`` the count is rounded and the cell stretched
    to tile exactly, so ``cell_dims`` may differ slightly from ``cell_size``.
    """

    polygon: SurfacePolygon
    cell_size: float
    origin: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray
    normal: np.ndarray
    nx: int
    ny: int
    cell_dims: tuple

    @classmethod
    def from_polygon(cls, polygon: SurfacePolygon, cell_size: float = DEFAULT_CELL_SIZE) -> "SurfaceGrid":
        if not cell_size > 0:
            raise ValueError("cell_size must be > 0")
        c = polygon.corners()
        e1 = c[1] - c[0]
        e2 = c[3] - c[0]
        lu, lv = np.linalg.norm(e1), np.linalg.norm(e2)
        nx = max(1, int(round(lu / cell_size)))
        ny = max(1, int(round(lv / cell_size)))
        n = np.asarray(polygon.unit_normal, dtype=float)
        u = e1 / lu
        v = e2 - np.dot(e2, u) * u
        v = v / np.linalg.norm(v)
        return cls(polygon, float(cell_size), np.asarray(c[0], dtype=float), u, v, n,
                   nx, ny, (float(lu / nx), float(lv / ny)))

    @property
    def cell_area(self) -> float:
        return self.cell_dims[0] * self.cell_dims[1]

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def plane_xs(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.cell_dims[0]

    def plane_ys(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.cell_dims[1]

    def centers(self) -> np.ndarray:
        """Cell centres (n_cells, 3) in flat order."""
        xs, ys = self.plane_xs(), self.plane_ys()
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        return (self.origin + xx.reshape(-1, 1) * self.u_axis + yy.reshape(-1, 1) * self.v_axis)

    def index_pairs(self) -> np.ndarray:
        jj, ii = np.meshgrid(np.arange(self.ny), np.arange(self.nx), indexing="ij")
        return np.column_stack([ii.ravel(), jj.ravel()])

    @property
    def cells(self) -> list[SurfaceSample]:
        n = tuple(self.normal)
        return [SurfaceSample(tuple(p), n) for p in self.centers()]


@dataclass(frozen=True)
class TimedTrajectory:
    """Carrier poses over time; ``samples`` is a sequence of ``(t, Pose3D)``."""

    samples: tuple

    def __post_init__(self):
        samples = tuple((float(t), p) for t, p in self.samples)
        if len(samples) < 2:
            raise ValueError("a trajectory needs at least two samples")
        ts = [t for t, _ in samples]
        if any(not math.isfinite(t) for t in ts):
            raise ValueError("trajectory times must be finite")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def duration(self) -> float:
        return self.samples[-1][0] - self.samples[0][0]

    def positions(self) -> np.ndarray:
        return np.array([p.position for _, p in self.samples])

    def orientations(self) -> np.ndarray:
        return np.array([p.orientation for _, p in self.samples])

    def interpolate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Positions (N, 3) and unit quaternions (N, 4) at times ``t`` (clamped to the span)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ts = self.times
        t = np.clip(t, ts[0], ts[-1])
        seg = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        u = (t - ts[seg]) / (ts[seg + 1] - ts[seg])
        p = self.positions()
        q = self.orientations()
        pos = p[seg] + u[:, None] * (p[seg + 1] - p[seg])
        quat = slerp(q[seg], q[seg + 1], u)
        return pos, quat

    @staticmethod
    def stationary(pose: Pose3D, duration: float) -> "TimedTrajectory":
        return TimedTrajectory(((0.0, pose), (float(duration), pose)))


@dataclass(frozen=True, eq=False)
class DoseMap:
    grid: SurfaceGrid
    dose: np.ndarray  # (n_cells,) J/m^2 in flat cell order

    def __post_init__(self):
        d = np.asarray(self.dose, dtype=float).reshape(-1)
        if d.size != self.grid.n_cells:
            raise ValueError("dose array length must equal the cell count")
        if np.any(d < 0):
            raise ValueError("doses must be non-negative")
        object.__setattr__(self, "dose", d)

    def as_image(self) -> np.ndarray:
        """Dose as (ny, nx), row j along the grid's v axis."""
        return self.dose.reshape(self.grid.ny, self.grid.nx)


def time_steps(t0: float, duration: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Left endpoints and widths covering ``[t0, t0 + duration]``; the last step may be short."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if duration < dt:
        raise ValueError("trajectory duration is shorter than dt")
    k = int(math.ceil(duration / dt - 1e-9))
    ts = t0 + dt * np.arange(k)
    widths = np.full(k, dt)
    widths[-1] = duration - dt * (k - 1)
    return ts, widths


def _mounted_emitters(sources: Sequence[LightSource]) -> EmitterSet:
    return EmitterSet.concat(emitters(s) for s in sources)


def simulate_dose(sources: Sequence[LightSource], traj: TimedTrajectory, grid: SurfaceGrid,
                  dt: float = DEFAULT_DT) -> DoseMap:
    """Integrate irradiance from ``sources`` carried along ``traj`` over every cell of ``grid``."""
    if grid is None or grid.n_cells == 0:
        raise ValueError("empty surface grid")
    if traj is None:
        raise ValueError("empty trajectory")
    ts, widths = time_steps(traj.samples[0][0], traj.duration, dt)
    es = _mounted_emitters(sources)
    dose = np.zeros((grid.ny, grid.nx))
    if len(es) == 0:
        return DoseMap(grid, dose.ravel())
    basis = np.stack([grid.u_axis, grid.v_axis, grid.normal])  # rows: u, v, n
    xs, ys = grid.plane_xs(), grid.plane_ys()
    coeff = np.ascontiguousarray(es.coeff, dtype=float)
    lamb = np.ascontiguousarray(es.lambertian, dtype=np.bool_)
    for start in range(0, len(ts), _CHUNK_STEPS):
        sl = slice(start, start + _CHUNK_STEPS)
        pos, quat = traj.interpolate(ts[sl])
        rot = quat_to_matrix(quat)                                   # (K, 3, 3)
        world = np.einsum("kab,mb->kma", rot, es.positions) + pos[:, None, :]
        axes = np.einsum("kab,mb->kma", rot, es.axes)
        rel = (world - grid.origin) @ basis.T                        # (K, M, 3)
        ax = axes @ basis.T
        accumulate_dose(dose, xs, ys,
                        np.ascontiguousarray(rel[..., 0]), np.ascontiguousarray(rel[..., 1]),
                        np.ascontiguousarray(rel[..., 2]),
                        np.ascontiguousarray(ax[..., 0]), np.ascontiguousarray(ax[..., 1]),
                        np.ascontiguousarray(ax[..., 2]),
                        coeff, lamb, np.ascontiguousarray(widths[sl]))
    log.debug("integrated %d steps x %d emitters over %d cells", len(ts), len(es), grid.n_cells)
    return DoseMap(grid, dose.ravel())


def reference_dose(sources, traj: TimedTrajectory, grid: SurfaceGrid, dt: float = DEFAULT_DT) -> np.ndarray:
    """Slow pure-numpy evaluation of the same integral (cross-check path)."""
    from .irradiance import irradiance_field

    ts, widths = time_steps(traj.samples[0][0], traj.duration, dt)
    es = _mounted_emitters(sources)
    centers = grid.centers()
    out = np.zeros(grid.n_cells)
    pos, quat = traj.interpolate(ts)
    rot = quat_to_matrix(quat)
    for k in range(len(ts)):
        out += irradiance_field(es.transformed(rot[k], pos[k]), centers, grid.normal) * widths[k]
    return out


# ---------------------------------------------------------------- reporting

@dataclass(frozen=True)
class PathogenDoseTable:
    entries: Mapping[str, float] = field(default_factory=lambda: {"MRSA": 64.0, "C. difficile": 120.0})

    def __post_init__(self):
        entries = {str(k): float(v) for k, v in dict(self.entries).items()}
        if any(not v > 0 for v in entries.values()):
            raise ValueError("pathogen dose thresholds must be > 0")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class DisinfectionReport:
    avg_dose: float
    min_dose: float
    max_dose: float
    exposure_time: float
    energy_consumption: float  # W*hr
    dpu: float
    coverage: Mapping[str, float]


def energy_watt_hours(sources: Sequence[LightSource], exposure_time: float) -> float:
    watts = sum(electrical_power(s) for s in sources)
    return watts * exposure_time / 3600.0


def report(dose_map: DoseMap, sources: Sequence[LightSource], exposure_time: float,
           pathogens: PathogenDoseTable | None = None) -> DisinfectionReport:
    if dose_map is None or dose_map.dose.size == 0:
        raise ValueError("empty dose map")
    return report_from_values(dose_map.dose, sources, exposure_time, pathogens)


def report_from_values(dose: np.ndarray, sources: Sequence[LightSource], exposure_time: float,
                       pathogens: PathogenDoseTable | None = None) -> DisinfectionReport:
    """Report arithmetic on a raw per-cell dose vector."""
    if not exposure_time > 0:
        raise ValueError("exposure_time must be > 0")
    dose = np.asarray(dose, dtype=float)
    if dose.size == 0:
        raise ValueError("empty dose map")
    pathogens = pathogens or PathogenDoseTable()
    avg = float(dose.mean())
    energy = energy_watt_hours(sources, exposure_time)
    coverage = {name: float(np.count_nonzero(dose >= thr)) / dose.size
                for name, thr in pathogens.entries.items()}
    return DisinfectionReport(avg, float(dose.min()), float(dose.max()), float(exposure_time),
                              energy, avg / energy, coverage)


def conservation_check(dose_map: DoseMap, sources: Sequence[LightSource], exposure_time: float) -> float:
    """Fraction of emitted radiant energy that landed on the grid."""
    emitted = sum(radiant_power(s) for s in sources) * exposure_time
    if not emitted > 0:
        raise ValueError("sources emit no radiant energy")
    return float(dose_map.dose.sum() * dose_map.grid.cell_area / emitted)
