"""Polyline geometry helpers shared by the map, feature and controller code.

All polylines are (N, 2) float arrays in a locally planar metric frame.
Signed lateral offsets are positive to the left of the direction of travel.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def cumulative_arclength(points: np.ndarray) -> np.ndarray:
    """Cumulative arclength per vertex, starting at 0."""
    deltas = np.diff(points, axis=0)
    seg = np.hypot(deltas[:, 0], deltas[:, 1])
    return np.concatenate(([0.0], np.cumsum(seg)))


def project_point(points: np.ndarray, arclen: np.ndarray, p) -> tuple[float, float]:
    """Project p onto the polyline.

    Returns (arclength of projection, signed lateral offset). Offset > 0
    means p lies to the left of the polyline direction.
    """
    p = np.asarray(p, dtype=float)
    a = points[:-1]
    b = points[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    seg_len2 = np.where(seg_len2 == 0.0, 1.0, seg_len2)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", p - proj, p - proj)
    i = int(np.argmin(d2))
    s = arclen[i] + t[i] * (arclen[i + 1] - arclen[i])
    tx, ty = ab[i]
    norm = math.hypot(tx, ty)
    if norm > 0.0:
        tx, ty = tx / norm, ty / norm
    dx, dy = p - proj[i]
    offset = tx * dy - ty * dx
    return float(s), float(offset)


def _segment_index(arclen: np.ndarray, s: float) -> int:
    i = int(np.searchsorted(arclen, s, side="right")) - 1
    return min(max(i, 0), len(arclen) - 2)


def point_at(points: np.ndarray, arclen: np.ndarray, s: float) -> np.ndarray:
    """Point at arclength s; extrapolates linearly beyond either end."""
    i = _segment_index(arclen, s)
    seg = arclen[i + 1] - arclen[i]
    t = (s - arclen[i]) / seg if seg > 0.0 else 0.0
    return points[i] + t * (points[i + 1] - points[i])


def tangent_at(points: np.ndarray, arclen: np.ndarray, s: float) -> np.ndarray:
    """Unit tangent of the segment containing arclength s."""
    i = _segment_index(arclen, s)
    d = points[i + 1] - points[i]
    n = math.hypot(d[0], d[1])
    return d / n if n > 0.0 else np.array([1.0, 0.0])


def offset_polyline(points: np.ndarray, offset: float) -> np.ndarray:
    """Shift a polyline laterally by offset metres (positive = left).

    Normals are averaged at interior vertices, which is exact for straight
    lines and a good approximation for gentle highway curvature.
    """
    if offset == 0.0:
        return points.copy()
    deltas = np.diff(points, axis=0)
    norms = np.hypot(deltas[:, 0], deltas[:, 1])
    norms = np.where(norms == 0.0, 1.0, norms)
    tangents = deltas / norms[:, None]
    vert_t = np.empty_like(points)
    vert_t[0] = tangents[0]
    vert_t[-1] = tangents[-1]
    if len(points) > 2:
        mid = tangents[:-1] + tangents[1:]
        mid_n = np.hypot(mid[:, 0], mid[:, 1])
        mid_n = np.where(mid_n == 0.0, 1.0, mid_n)
        vert_t[1:-1] = mid / mid_n[:, None]
    normals = np.stack([-vert_t[:, 1], vert_t[:, 0]], axis=1)
    return points + offset * normals


def rectangle_corners(centre, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle, counter-clockwise."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(centre, dtype=float)
