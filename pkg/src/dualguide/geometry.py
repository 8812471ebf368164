"""Oriented 3D boxes, their BEV footprints, and the plane geometry they need.

Box attribute layout is fixed project-wide as (x, y, z, w, l, h, yaw, vx, vy):
w is the extent along the box heading axis, l the lateral extent, h vertical.
The rotated-rectangle IoU uses exact convex polygon clipping so threshold
comparisons downstream are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Box3D:
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # (w, l, h)
    yaw: float
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if min(self.size) <= 0.0:
            raise ContractError(f"box size must be positive, got {self.size}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))


@dataclass(frozen=True)
class RotatedRect:
    center: tuple[float, float]
    extent: tuple[float, float]  # (w, l)
    yaw: float

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]


@dataclass(frozen=True)
class KeySamples:
    """Footprint center plus the midpoints of its four boundary lines (2D m)."""

    center: tuple[float, float]
    top: tuple[float, float]
    bottom: tuple[float, float]
    left: tuple[float, float]
    right: tuple[float, float]

    def ordered(self) -> list[tuple[float, float]]:
        return [self.center, self.top, self.bottom, self.left, self.right]


def project_to_bev(box: Box3D) -> RotatedRect:
    """Drop z and h: the box footprint on the ground plane."""
    return RotatedRect(
        center=(box.center[0], box.center[1]),
        extent=(box.size[0], box.size[1]),
        yaw=box.yaw,
    )


def box_axes(yaw: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit heading axis and lateral axis of a footprint with the given yaw."""
    u = np.array([math.cos(yaw), math.sin(yaw)])
    v = np.array([-math.sin(yaw), math.cos(yaw)])
    return u, v


def key_samples(rect: RotatedRect) -> KeySamples:
    """Center and the four boundary-line midpoints of a footprint."""
    cx, cy = rect.center
    u, v = box_axes(rect.yaw)
    hw, hl = rect.extent[0] / 2.0, rect.extent[1] / 2.0
    return KeySamples(
        center=(cx, cy),
        top=(cx + hl * v[0], cy + hl * v[1]),
        bottom=(cx - hl * v[0], cy - hl * v[1]),
        left=(cx - hw * u[0], cy - hw * u[1]),
        right=(cx + hw * u[0], cy + hw * u[1]),
    )


def rect_corners(rect: RotatedRect) -> np.ndarray:
    """4x2 corner array, counter-clockwise from the (+w, +l) corner."""
    u, v = box_axes(rect.yaw)
    hw, hl = rect.extent[0] / 2.0, rect.extent[1] / 2.0
    c = np.array(rect.center)
    return np.array(
        [
            c + hw * u + hl * v,
            c - hw * u + hl * v,
            c - hw * u - hl * v,
            c + hw * u - hl * v,
        ]
    )


def _polygon_area(poly: list[tuple[float, float]]) -> float:
    """Shoelace area of a counter-clockwise polygon."""
    area = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        area += x1 * y2 - y1 * x2
    return 0.5 * area


def _clip_polygon(
    poly: list[tuple[float, float]], a: tuple[float, float], b: tuple[float, float]
) -> list[tuple[float, float]]:
    """Clip a convex polygon against the half-plane left of directed edge a->b."""
    out: list[tuple[float, float]] = []
    ex, ey = b[0] - a[0], b[1] - a[1]

    def inside(p: tuple[float, float]) -> float:
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = inside(p), inside(q)
        if sp >= 0.0:
            out.append(p)
        if (sp > 0.0 and sq < 0.0) or (sp < 0.0 and sq > 0.0):
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def intersection_area(a: RotatedRect, b: RotatedRect) -> float:
    """Exact overlap area of two footprints via Sutherland-Hodgman clipping."""
    poly = [tuple(p) for p in rect_corners(a)]
    clip = [tuple(p) for p in rect_corners(b)]
    for i in range(4):
        if len(poly) < 3:
            return 0.0
        poly = _clip_polygon(poly, clip[i], clip[(i + 1) % 4])
    if len(poly) < 3:
        return 0.0
    return abs(_polygon_area(poly))


def rotated_iou_2d(a: RotatedRect, b: RotatedRect) -> float:
    """IoU of two oriented footprints; 0 when the union has no area."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def center_distance_bev(a: Box3D, b: Box3D) -> float:
    """Euclidean distance between ground-plane centers."""
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


def volume(box: Box3D) -> float:
    """w * l * h in cubic meters."""
    return box.size[0] * box.size[1] * box.size[2]


def points_in_box(points: np.ndarray, box: Box3D) -> int:
    """Count points inside the box, boundaries inclusive.

    `points` is an (N, 3) array of world coordinates.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0
    pts = pts.reshape(-1, 3)
    rel = pts - np.array([*box.center])
    u, v = box_axes(box.yaw)
    local_x = rel[:, 0] * u[0] + rel[:, 1] * u[1]
    local_y = rel[:, 0] * v[0] + rel[:, 1] * v[1]
    local_z = rel[:, 2]
    hw, hl, hh = box.size[0] / 2.0, box.size[1] / 2.0, box.size[2] / 2.0
    inside = (
        (np.abs(local_x) <= hw) & (np.abs(local_y) <= hl) & (np.abs(local_z) <= hh)
    )
    return int(inside.sum())
