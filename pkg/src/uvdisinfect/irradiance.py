"""Radiometric source models and point-irradiance kernels.

Two emitter families are supported:

* :class:`LedPanelSource` -- an ``n x n`` grid of Lambertian LEDs sharing one
  optical axis.  A single LED of radiant power ``P`` gives
  ``E = P / (pi d^2) * cos(theta_e) * cos(theta_i)`` on a receiving element.
* :class:`TubeLampBankSource` -- a bank of linear lamps, each cut into
  ``segment_count`` isotropic point emitters of power ``P / segment_count``
  giving ``E = P_seg / (4 pi d^2) * cos(theta_i)``.

Both are reduced to an :class:`EmitterSet` (flat arrays of point emitters) so
the dose integrator can treat them uniformly.  Occlusion is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .geometry import Pose3D, quat_from_axis_angle


@dataclass(frozen=True)
class SurfaceSample:
    position: tuple
    unit_normal: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        n = tuple(float(v) for v in self.unit_normal)
        if abs(math.sqrt(sum(v * v for v in n)) - 1.0) > 1e-9:
            raise ValueError("SurfaceSample.unit_normal must have unit length")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "unit_normal", n)


@dataclass(frozen=True)
class LedPanelSource:
    """Square LED panel; LEDs sit at the centres of an n x n tiling of the panel face."""

    grid: int = 5
    panel_side: float = 0.025
    per_led_radiant_power: float = 0.028
    electrical_wattage: float = 30.0
    pose: Pose3D = field(default_factory=Pose3D)

    def __post_init__(self):
        if self.grid < 1:
            raise ValueError("LedPanelSource.grid must be >= 1")
        if self.panel_side <= 0:
            raise ValueError("LedPanelSource.panel_side must be > 0")
        if self.per_led_radiant_power < 0 or self.electrical_wattage <= 0:
            raise ValueError("LedPanelSource powers must be positive")

    def local_led_positions(self) -> np.ndarray:
        """LED positions in the panel frame (z = 0 plane), shape (n*n, 3)."""
        n = self.grid
        offs = (np.arange(n) + 0.5) * (self.panel_side / n) - 0.5 * self.panel_side
        xx, yy = np.meshgrid(offs, offs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(n * n)])

    @property
    def radiant_power(self) -> float:
        return self.grid * self.grid * self.per_led_radiant_power


def default_lamp_poses(count: int = 5, ring_radius: float = 0.1) -> tuple:
    # Vertical-column robot: lamps on a ring in the carrier's local x-z plane,
    # lamp axes along local y (vertical when the carrier faces a wall).
    q = tuple(quat_from_axis_angle((1.0, 0.0, 0.0), -math.pi / 2))
    poses = []
    for k in range(count):
        phi = 2.0 * math.pi * k / count
        pos = (ring_radius * math.sin(phi), 0.0, ring_radius * math.cos(phi))
        poses.append(Pose3D(pos, q))
    return tuple(poses)


@dataclass(frozen=True)
class TubeLampBankSource:
    """Bank of linear tube lamps. Each lamp axis is the local +z of its pose, centred on it."""

    lamp_count: int = 5
    lamp_length: float = 1.19
    per_lamp_radiant_power: float = 27.0
    per_lamp_wattage: float = 115.0
    segment_count: int = 64
    poses: tuple = None

    def __post_init__(self):
        if self.lamp_count < 1:
            raise ValueError("TubeLampBankSource.lamp_count must be >= 1")
        if self.lamp_length <= 0:
            raise ValueError("TubeLampBankSource.lamp_length must be > 0")
        if self.per_lamp_radiant_power < 0 or self.per_lamp_wattage <= 0:
            raise ValueError("TubeLampBankSource powers must be positive")
        if self.segment_count < 1:
            raise ValueError("TubeLampBankSource.segment_count must be >= 1")
        if self.poses is None:
            object.__setattr__(self, "poses", default_lamp_poses(self.lamp_count))
        else:
            object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.poses) != self.lamp_count:
            raise ValueError("TubeLampBankSource needs one pose per lamp")

    @property
    def radiant_power(self) -> float:
        return self.lamp_count * self.per_lamp_radiant_power


LightSource = Union[LedPanelSource, TubeLampBankSource]


def electrical_power(src: LightSource) -> float:
    """Electrical draw in watts."""
    if isinstance(src, LedPanelSource):
        return float(src.electrical_wattage)
    if isinstance(src, TubeLampBankSource):
        return float(src.lamp_count * src.per_lamp_wattage)
    raise TypeError(f"unknown source type {type(src).__name__}")


def radiant_power(src: LightSource) -> float:
    """Total optical output in watts."""
    return float(src.radiant_power)


# ---------------------------------------------------------------- emitter sets

@dataclass(frozen=True)
class EmitterSet:
    """Point emitters in some frame.

    ``coeff`` already folds in the angular normalisation: ``P/pi`` for
    Lambertian emitters and ``P/(4 pi)`` for isotropic ones.
    """

    positions: np.ndarray  # (M, 3)
    axes: np.ndarray       # (M, 3) optical axis; ignored where lambertian is False
    coeff: np.ndarray      # (M,)
    lambertian: np.ndarray  # (M,) bool

    def __len__(self):
        return len(self.coeff)

    def transformed(self, rot: np.ndarray, trans: np.ndarray) -> "EmitterSet":
        return EmitterSet(self.positions @ rot.T + trans, self.axes @ rot.T,
                          self.coeff, self.lambertian)

    @staticmethod
    def concat(sets) -> "EmitterSet":
        sets = list(sets)
        if not sets:
            return EmitterSet(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, bool))
        return EmitterSet(
            np.concatenate([s.positions for s in sets]),
            np.concatenate([s.axes for s in sets]),
            np.concatenate([s.coeff for s in sets]),
            np.concatenate([s.lambertian for s in sets]),
        )


def emitters(src: LightSource) -> EmitterSet:
    """Point-emitter decomposition of a source, in the source's parent frame."""
    if isinstance(src, LedPanelSource):
        local = src.local_led_positions()
        m = len(local)
        pos = src.pose.transform_points(local)
        axes = np.tile(src.pose.axis(), (m, 1))
        coeff = np.full(m, src.per_led_radiant_power / math.pi)
        return EmitterSet(pos, axes, coeff, np.ones(m, bool))
    if isinstance(src, TubeLampBankSource):
        s = src.segment_count
        offs = (np.arange(s) + 0.5) * (src.lamp_length / s) - 0.5 * src.lamp_length
        local = np.column_stack([np.zeros(s), np.zeros(s), offs])
        pos = np.concatenate([p.transform_points(local) for p in src.poses])
        axes = np.concatenate([np.tile(p.axis(), (s, 1)) for p in src.poses])
        p_seg = src.per_lamp_radiant_power / s
        coeff = np.full(len(pos), p_seg / (4.0 * math.pi))
        return EmitterSet(pos, axes, coeff, np.zeros(len(pos), bool))
    raise TypeError(f"unknown source type {type(src).__name__}")


def irradiance_field(es: EmitterSet, positions, normals) -> np.ndarray:
    """Irradiance (W/m^2) at many receiving elements, summed over emitters in index order.

    ``positions`` and ``normals`` have shape (N, 3); a single normal of shape (3,)
    is broadcast.  Raises if any receiver coincides with an emitter.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    normals = np.broadcast_to(np.asarray(normals, dtype=float), positions.shape)
    total = np.zeros(len(positions))
    for m in range(len(es)):
        v = positions - es.positions[m]          # emitter -> target
        d2 = np.einsum("ij,ij->i", v, v)
        if np.any(d2 == 0.0):
            raise ValueError("receiver coincides with an emitter position")
        d = np.sqrt(d2)
        cos_i = np.maximum(-np.einsum("ij,ij->i", v, normals) / d, 0.0)
        e = es.coeff[m] * cos_i / d2
        if es.lambertian[m]:
            e = e * np.maximum(v @ es.axes[m] / d, 0.0)
        total += e
    return total


# ---------------------------------------------------------------- public kernels

def irradiance_lambertian_point(emitter_pos, emitter_normal, radiant_power: float,
                                target: SurfaceSample) -> float:
    """Irradiance from one Lambertian point emitter; zero behind the emitter or the target."""
    if radiant_power < 0:
        raise ValueError("radiant_power must be non-negative")
    v = np.asarray(target.position) - np.asarray(emitter_pos, dtype=float)
    d2 = float(v @ v)
    if d2 == 0.0:
        raise ValueError("emitter and target positions coincide")
    d = math.sqrt(d2)
    cos_e = max(float(v @ np.asarray(emitter_normal, dtype=float)) / d, 0.0)
    cos_i = max(-float(v @ np.asarray(target.unit_normal)) / d, 0.0)
    return radiant_power / (math.pi * d2) * cos_e * cos_i


def irradiance_isotropic_point(emitter_pos, radiant_power: float, target: SurfaceSample) -> float:
    if radiant_power < 0:
        raise ValueError("radiant_power must be non-negative")
    v = np.asarray(target.position) - np.asarray(emitter_pos, dtype=float)
    d2 = float(v @ v)
    if d2 == 0.0:
        raise ValueError("emitter and target positions coincide")
    cos_i = max(-float(v @ np.asarray(target.unit_normal)) / math.sqrt(d2), 0.0)
    return radiant_power / (4.0 * math.pi * d2) * cos_i


def irradiance_panel(src: LedPanelSource, target: SurfaceSample) -> float:
    axis = src.pose.axis()
    total = 0.0
    for p in src.pose.transform_points(src.local_led_positions()):
        total += irradiance_lambertian_point(p, axis, src.per_led_radiant_power, target)
    return total


def irradiance_lamp_bank(src: TubeLampBankSource, target: SurfaceSample) -> float:
    es = emitters(src)
    return float(irradiance_field(es, [target.position], target.unit_normal)[0])


def irradiance(src: LightSource, target: SurfaceSample) -> float:
    if isinstance(src, LedPanelSource):
        return irradiance_panel(src, target)
    if isinstance(src, TubeLampBankSource):
        return irradiance_lamp_bank(src, target)
    raise TypeError(f"unknown source type {type(src).__name__}")
