"""Axis-aligned box geometry shared by every placement subsystem.

All footprints are axis-aligned rectangles on the floor plane; yaw only
matters in 90-degree steps (it swaps width/length) and in the angular
penalty terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class Dimensions:
    """Bounding-box size in meters."""

    width: float
    length: float
    height: float

    def is_valid(self) -> bool:
        return all(
            isinstance(v, (int, float)) and math.isfinite(v) and v > 0
            for v in (self.width, self.length, self.height)
        )

    def footprint_area(self) -> float:
        return self.width * self.length


@dataclass
class Pose:
    """Center position plus yaw of a placed box, in its room-local frame."""

    x: float
    y: float
    z: float
    yaw: float
    dims: Dimensions

    def half_extents(self) -> tuple[float, float]:
        # yaw snaps to the nearest 90-degree step for footprint purposes
        quarter = round(self.yaw / HALF_PI) % 4
        if quarter % 2 == 1:
            return self.dims.length / 2.0, self.dims.width / 2.0
        return self.dims.width / 2.0, self.dims.length / 2.0

    def footprint(self) -> tuple[float, float, float, float]:
        hx, hy = self.half_extents()
        return (self.x - hx, self.y - hy, self.x + hx, self.y + hy)

    def box3d(self) -> tuple[float, float, float, float, float, float]:
        x0, y0, x1, y1 = self.footprint()
        hz = self.dims.height / 2.0
        return (x0, y0, self.z - hz, x1, y1, self.z + hz)

    def moved(self, x: float, y: float) -> "Pose":
        return replace(self, x=x, y=y)

    def rotated(self, yaw: float) -> "Pose":
        return replace(self, yaw=wrap_angle(yaw))


def wrap_angle(a: float) -> float:
    """Normalize an angle to [0, 2*pi)."""
    a = math.fmod(a, TWO_PI)
    return a + TWO_PI if a < 0 else a


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute difference between two angles, in [0, pi]."""
    d = abs(wrap_angle(a) - wrap_angle(b))
    return TWO_PI - d if d > math.pi else d


def center_distance(a: Pose, b: Pose) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def penetration_depth(
    fa: tuple[float, float, float, float], fb: tuple[float, float, float, float]
) -> float:
    """Minimal axis-aligned translation separating two footprints.

    Zero when the boxes are disjoint or merely touching.
    """
    ox = min(fa[2], fb[2]) - max(fa[0], fb[0])
    if ox <= 0:
        return 0.0
    oy = min(fa[3], fb[3]) - max(fa[1], fb[1])
    if oy <= 0:
        return 0.0
    return min(ox, oy)


def out_of_bounds_depth(
    fp: tuple[float, float, float, float], width: float, length: float
) -> float:
    """How far a footprint pokes outside the [0,W]x[0,L] room, worst axis."""
    over = max(
        0.0 - fp[0],
        0.0 - fp[1],
        fp[2] - width,
        fp[3] - length,
    )
    return max(0.0, over)


def point_outside_box_distance(
    p: tuple[float, float, float],
    lo: tuple[float, float, float],
    hi: tuple[float, float, float],
) -> float:
    """Euclidean distance from a point to an axis-aligned 3D box (0 inside)."""
    d2 = 0.0
    for c, a, b in zip(p, lo, hi):
        if c < a:
            d2 += (a - c) ** 2
        elif c > b:
            d2 += (c - b) ** 2
    return math.sqrt(d2)


def segment_intersects_box(
    p0: tuple[float, float, float],
    p1: tuple[float, float, float],
    box: tuple[float, float, float, float, float, float],
) -> bool:
    """Slab test: does the open segment p0-p1 pass through the 3D box?

    Tangent grazing contact does not count as an intersection.
    """
    tmin, tmax = 0.0, 1.0
    for axis in range(3):
        o, d = p0[axis], p1[axis] - p0[axis]
        lo, hi = box[axis], box[axis + 3]
        if abs(d) < 1e-12:
            if o <= lo or o >= hi:
                return False
            continue
        t0 = (lo - o) / d
        t1 = (hi - o) / d
        if t0 > t1:
            t0, t1 = t1, t0
        tmin = max(tmin, t0)
        tmax = min(tmax, t1)
        if tmin >= tmax - 1e-12:
            return False
    return True
