"""Oriented 3D boxes and exact rotated-box IoU.

Boxes are upright 7-DOF boxes (center, length/width/height, yaw about the
world up-axis). 3D IoU is computed as bird's-eye-view polygon intersection
(Sutherland-Hodgman clipping of the two rotated rectangles) times the
vertical extent overlap, which is exact for yaw-only boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Vertex classification / dedupe tolerance for clipping, in meters.
VERTEX_EPS = 1e-9
# Intersections below this area are sign-noise slivers and reported as 0.
SLIVER_AREA = 1e-12

_TWO_PI = 2.0 * math.pi


def normalize_heading(theta: float) -> float:
    """Wrap an angle in radians into [-pi, pi)."""
    wrapped = (theta + math.pi) % _TWO_PI - math.pi
    # fmod can land exactly on pi for inputs like -1e-17 below a wrap point
    if wrapped >= math.pi:
        wrapped -= _TWO_PI
    return wrapped


@dataclass(frozen=True)
class Vec3:
    """A point or displacement in meters; all components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"Vec3 components must be finite, got {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)


@dataclass(frozen=True)
class Box3D:
    """Upright oriented box: center, extents along box-local x/y/z, yaw heading.

    Dimensions must be strictly positive; the heading is normalized to
    [-pi, pi) on construction.
    """

    center: Vec3
    length: float
    width: float
    height: float
    heading: float

    def __post_init__(self):
        for name in ("length", "width", "height"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"Box3D.{name} must be finite and > 0, got {v}")
        if not math.isfinite(self.heading):
            raise ValueError(f"Box3D.heading must be finite, got {self.heading}")
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    def with_center(self, center: Vec3) -> "Box3D":
        return replace(self, center=center)


@dataclass(frozen=True)
class ConvexPolygon2D:
    """Convex polygon in the ground plane, vertices in CCW order."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise ValueError(f"ConvexPolygon2D needs >= 3 vertices, got {n}")
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            if abs(ax - bx) <= VERTEX_EPS and abs(ay - by) <= VERTEX_EPS:
                raise ValueError(f"repeated vertex near index {i}")
        if _signed_area(verts) <= 0.0:
            raise ValueError("vertices must be in counter-clockwise order")
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross < -VERTEX_EPS:
                raise ValueError(f"polygon is not convex at vertex index {(i + 1) % n}")

    def area(self) -> float:
        return _signed_area(self.vertices)


def _signed_area(verts) -> float:
    acc = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def bev_footprint(box: Box3D) -> ConvexPolygon2D:
    """Ground-plane rectangle of a box: 4 corners rotated by heading, CCW."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    cx, cy = box.center.x, box.center.y
    corners = []
    for lx, ly in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        corners.append((cx + c * lx - s * ly, cy + s * lx + c * ly))
    return ConvexPolygon2D(tuple(corners))


def _edge_intersection(s, e, a, b):
    """Intersection of segment s-e with the (infinite) line through a-b."""
    dcx, dcy = a[0] - b[0], a[1] - b[1]
    dpx, dpy = s[0] - e[0], s[1] - e[1]
    denom = dcx * dpy - dcy * dpx
    if abs(denom) < 1e-300:
        return e
    n1 = a[0] * b[1] - a[1] * b[0]
    n2 = s[0] * e[1] - s[1] * e[0]
    inv = 1.0 / denom
    return ((n1 * dpx - n2 * dcx) * inv, (n1 * dpy - n2 * dcy) * inv)


def _clip_convex(subject, clip_poly):
    """Sutherland-Hodgman: clip CCW `subject` against CCW convex `clip_poly`."""
    output = list(subject)
    n = len(clip_poly)
    for k in range(n):
        if not output:
            return []
        a = clip_poly[k]
        b = clip_poly[(k + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        input_list = output
        output = []
        s = input_list[-1]
        # side > 0 means strictly left of the directed edge a->b (inside)
        side_s = ex * (s[1] - a[1]) - ey * (s[0] - a[0])
        for e in input_list:
            side_e = ex * (e[1] - a[1]) - ey * (e[0] - a[0])
            if side_e >= -VERTEX_EPS:
                if side_s < -VERTEX_EPS:
                    output.append(_edge_intersection(s, e, a, b))
                output.append(e)
            elif side_s >= -VERTEX_EPS:
                output.append(_edge_intersection(s, e, a, b))
            s, side_s = e, side_e
    return output


def convex_intersection_area(a: ConvexPolygon2D, b: ConvexPolygon2D) -> float:
    """Area of the intersection of two convex polygons, in square meters.

    Returns 0.0 for disjoint polygons; degenerate slivers below 1e-12 m^2
    are reported as 0 to avoid sign-noise.
    """
    clipped = _clip_convex(a.vertices, b.vertices)
    if len(clipped) < 3:
        return 0.0
    area = _signed_area(clipped)
    if area < SLIVER_AREA:
        return 0.0
    return area


def _box_sort_key(box: Box3D):
    return (box.center.x, box.center.y, box.center.z,
            box.length, box.width, box.height, box.heading)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Exact 3D IoU of two upright boxes: BEV overlap x vertical overlap.

    The pair is ordered canonically before computing so that
    iou_3d(a, b) == iou_3d(b, a) bit-for-bit.
    """
    if _box_sort_key(b) < _box_sort_key(a):
        a, b = b, a
    dz = min(a.center.z + 0.5 * a.height, b.center.z + 0.5 * b.height) - \
        max(a.center.z - 0.5 * a.height, b.center.z - 0.5 * b.height)
    if dz <= 0.0:
        return 0.0
    inter_area = convex_intersection_area(bev_footprint(a), bev_footprint(b))
    if inter_area <= 0.0:
        return 0.0
    inter_vol = inter_area * dz
    union = a.volume + b.volume - inter_vol
    return min(1.0, inter_vol / union)
