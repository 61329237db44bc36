"""Plane bases, 2-D convex hulls and minimum-area bounding rectangles."""

from __future__ import annotations

import math

import numpy as np


def plane_basis(normal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal (u, v, n) with n along ``normal``.

    ``u`` is chosen deterministically from the world axis least aligned with n.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = ref - np.dot(ref, n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v, n


def polygon_area_2d(pts) -> float:
    """Shoelace area (absolute) of a simple polygon given as (N, 2)."""
    p = np.asarray(pts, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def convex_hull_2d(pts) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    p = np.unique(np.asarray(pts, dtype=float), axis=0)
    if len(p) < 3:
        return p

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for q in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list = []
    for q in p[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1])


def min_area_rectangle(pts) -> tuple[np.ndarray, float]:
    """Minimum-area enclosing rectangle of a 2-D point set by rotating calipers.

    Returns ``(corners, area)`` with the 4 corners counter-clockwise.  One side
    of the optimum is collinear with a hull edge, so only hull-edge directions
    are tried.  Raises ``ValueError`` for collinear input.
    """
    hull = convex_hull_2d(pts)
    if len(hull) < 3 or polygon_area_2d(hull) <= 1e-15:
        raise ValueError("points are collinear; no rectangle can be fitted")
    best = None
    m = len(hull)
    for k in range(m):
        e = hull[(k + 1) % m] - hull[k]
        length = math.hypot(e[0], e[1])
        if length == 0.0:
            continue
        ux = e / length
        uy = np.array([-ux[1], ux[0]])
        px = hull @ ux
        py = hull @ uy
        area = (px.max() - px.min()) * (py.max() - py.min())
        if best is None or area < best[0] - 1e-15:
            best = (area, ux, uy, px.min(), px.max(), py.min(), py.max())
    area, ux, uy, x0, x1, y0, y1 = best
    corners = np.array([
        x0 * ux + y0 * uy,
        x1 * ux + y0 * uy,
        x1 * ux + y1 * uy,
        x0 * ux + y1 * uy,
    ])
    return corners, float(area)
