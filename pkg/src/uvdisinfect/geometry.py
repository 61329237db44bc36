"""Rigid-body helpers: planar and spatial poses, quaternions, slerp.

Quaternions are stored scalar-first, ``(w, x, y, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]."""
    t = math.remainder(theta, _TWO_PI)
    if t <= -math.pi:
        t += _TWO_PI
    return t


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Pose2D.{name} must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


# ---------------------------------------------------------------- quaternions

def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (or a stack of them, shape (..., 4))."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_from_matrix(m) -> np.ndarray:
    """Unit quaternion with non-negative scalar part for a rotation matrix."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.concatenate([[math.cos(h)], math.sin(h) * axis])


def frame_quaternion(x_axis, z_axis) -> np.ndarray:
    """Orientation whose local +x and +z map onto the given world directions.

    ``x_axis`` is orthogonalised against ``z_axis`` first.
    """
    z = np.asarray(z_axis, dtype=float)
    z = z / np.linalg.norm(z)
    x = np.asarray(x_axis, dtype=float)
    x = x - np.dot(x, z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("x_axis is parallel to z_axis")
    x = x / nx
    y = np.cross(z, x)
    return quat_from_matrix(np.column_stack([x, y, z]))


def slerp(q0, q1, u):
    """Spherical linear interpolation; ``u`` may be a scalar or an array.

    Inputs of shape (4,) or (N, 4); ``u`` broadcasts against the leading axis.
    Takes the short arc.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.array(q1, dtype=float)
    u = np.asarray(u, dtype=float)
    dot = np.sum(q0 * q1, axis=-1)
    flip = dot < 0
    q1 = np.where(flip[..., None], -q1, q1)
    dot = np.abs(dot)
    dot = np.minimum(dot, 1.0)
    omega = np.arccos(dot)
    so = np.sin(omega)
    near = so < 1e-9
    safe = np.where(near, 1.0, so)
    w0 = np.where(near, 1.0 - u, np.sin((1.0 - u) * omega) / safe)
    w1 = np.where(near, u, np.sin(u * omega) / safe)
    q = w0[..., None] * q0 + w1[..., None] * q1
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


_IDENTITY_Q = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Pose3D:
    """Position plus unit-quaternion orientation. An emitter's optical axis is local +z."""

    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = field(default=_IDENTITY_Q)

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        q = tuple(float(v) for v in self.orientation)
        if len(p) != 3 or len(q) != 4:
            raise ValueError("Pose3D needs a 3-vector position and a 4-vector quaternion")
        if not all(math.isfinite(v) for v in p + q):
            raise ValueError("Pose3D components must be finite")
        if abs(math.sqrt(sum(v * v for v in q)) - 1.0) > 1e-9:
            raise ValueError("Pose3D orientation must be a unit quaternion")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_arrays(cls, position, orientation) -> "Pose3D":
        q = np.asarray(orientation, dtype=float)
        return cls(tuple(np.asarray(position, dtype=float)), tuple(q / np.linalg.norm(q)))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def axis(self) -> np.ndarray:
        return self.rotation()[:, 2]

    def transform_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation().T + np.asarray(self.position)

    def compose(self, local: "Pose3D") -> "Pose3D":
        """World pose of a frame given relative to this one."""
        p = self.transform_points(np.asarray(local.position))
        q = quat_multiply(self.orientation, local.orientation)
        return Pose3D.from_arrays(p, q)
