"""Geometric primitives shared by the energy terms.

Projection, convex hulls, convex polygon clipping (Sutherland-Hodgman),
2D IoU, footprint overlap and intersection volume of yaw-only cuboids.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..core.errors import BehindCameraError, DegenerateHullError
from .model import Camera, Cuboid, HumanPose, rotation_z

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-9
_INSIDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Polygon2D:
    """Convex polygon, vertices counterclockwise, shape (n, 2)."""

    vertices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))

    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    def bounds(self) -> "Rect2D":
        return Rect2D.from_points(self.vertices)


@dataclass(frozen=True)
class Rect2D:
    """Axis-aligned rectangle in pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @classmethod
    def from_box(cls, box) -> "Rect2D":
        x0, y0, x1, y1 = (float(v) for v in box)
        return cls(x0, y0, x1, y1)

    @classmethod
    def from_points(cls, points) -> "Rect2D":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    def area(self) -> float:
        return max(0.0, self.x_max - self.x_min) * max(0.0, self.y_max - self.y_min)

    def as_box(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_polygon(self) -> Polygon2D:
        return Polygon2D(np.array([
            [self.x_min, self.y_min], [self.x_max, self.y_min],
            [self.x_max, self.y_max], [self.x_min, self.y_max],
        ]))


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area (absolute) of an ordered vertex list."""
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def project_points(cam: Camera, points) -> Tuple[np.ndarray, np.ndarray]:
    """Project world points (n, 3); returns pixels (n, 2) and camera depths (n,).

    Pixels of points with nonpositive depth are meaningless; callers cull by depth.
    """
    pc = cam.to_camera(np.atleast_2d(points))
    depth = pc[:, 2]
    homog = pc @ cam.intrinsics.T
    safe = np.where(np.abs(homog[:, 2:3]) > MIN_DEPTH, homog[:, 2:3], MIN_DEPTH)
    return homog[:, :2] / safe, depth


def project_point(cam: Camera, p) -> np.ndarray:
    """Pinhole projection K.R.(p - position), dehomogenized."""
    uv, depth = project_points(cam, np.asarray(p, dtype=float).reshape(1, 3))
    if depth[0] <= MIN_DEPTH:
        raise BehindCameraError(f"point {np.asarray(p).tolist()} is behind the camera (depth {depth[0]:.3g})")
    return uv[0]


def convex_hull(points) -> Polygon2D:
    """Minimal convex polygon (counterclockwise) containing the points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateHullError(f"need at least 3 points, got {len(pts)}")
    try:
        hull = ConvexHull(pts)
    except QhullError as e:
        raise DegenerateHullError(f"degenerate hull: {str(e).splitlines()[0]}") from e
    # 2D hulls from qhull are already counterclockwise
    return Polygon2D(pts[hull.vertices])


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.

    Returns the vertices of the intersection (possibly fewer than 3).
    """
    output = [tuple(p) for p in subject]
    n = len(clip)
    for k in range(n):
        if not output:
            break
        a = clip[k - 1]
        b = clip[k]
        ex, ey = b[0] - a[0], b[1] - a[1]
        inputs = output
        output = []

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        s = inputs[-1]
        s_side = side(s)
        for e in inputs:
            e_side = side(e)
            if e_side >= -_INSIDE_TOL:
                if s_side < -_INSIDE_TOL:
                    t = s_side / (s_side - e_side)
                    output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
                output.append(e)
            elif s_side >= -_INSIDE_TOL:
                t = s_side / (s_side - e_side)
                output.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
            s, s_side = e, e_side
    return np.array(output, dtype=float).reshape(-1, 2)


def polygon_intersection_area(a: Polygon2D, b: Polygon2D) -> float:
    """Area of the intersection of two convex polygons."""
    if a.is_empty or b.is_empty:
        return 0.0
    return polygon_area(clip_polygon(a.vertices, b.vertices))


def _as_polygon(shape: Union[Polygon2D, Rect2D]) -> Polygon2D:
    return shape.as_polygon() if isinstance(shape, Rect2D) else shape


def iou_2d(a: Union[Polygon2D, Rect2D], b: Union[Polygon2D, Rect2D]) -> float:
    """Intersection over union; 0 when the union has zero area."""
    pa, pb = _as_polygon(a), _as_polygon(b)
    inter = polygon_intersection_area(pa, pb)
    union = pa.area() + pb.area() - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def footprint_polygon(c: Cuboid) -> Polygon2D:
    return Polygon2D(c.footprint())


def footprint_overlap(vi: Cuboid, vj: Cuboid) -> float:
    """Share of vi's xy footprint covered by vj's footprint (not symmetric)."""
    area_i = float(vi.size[0] * vi.size[1])
    if area_i <= 0.0:
        return 0.0
    inter = polygon_intersection_area(footprint_polygon(vi), footprint_polygon(vj))
    return min(1.0, inter / area_i)


def intersection_volume(a: Cuboid, b: Cuboid) -> float:
    """Volume of a ∩ b: footprint intersection area times z-interval overlap.

    Exact for yaw-only boxes, which are right prisms over convex footprints.
    """
    dz = min(a.top_z, b.top_z) - max(a.bottom_z, b.bottom_z)
    if dz <= 0.0:
        return 0.0
    # cheap reject on bounding circles
    reach = 0.5 * (np.hypot(a.size[0], a.size[1]) + np.hypot(b.size[0], b.size[1]))
    if np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= reach:
        return 0.0
    return polygon_intersection_area(footprint_polygon(a), footprint_polygon(b)) * dz


def volume_outside(v: Cuboid, container: Cuboid) -> float:
    """Volume of v lying outside the container box."""
    return max(0.0, v.volume - intersection_volume(v, container))


def cuboid_iou(a: Cuboid, b: Cuboid) -> float:
    inter = intersection_volume(a, b)
    union = a.volume + b.volume - inter
    return 0.0 if union <= 0.0 else inter / union


def human_hull_volume_proxy(h: HumanPose, margin: float = 0.10) -> Cuboid:
    """Yaw-aligned bounding cuboid of the joints, inflated laterally by `margin`."""
    rot = rotation_z(h.yaw)
    local = (h.joints - h.center) @ rot
    lo, hi = local.min(axis=0), local.max(axis=0)
    size = hi - lo
    size[0] += 2.0 * margin
    size[1] += 2.0 * margin
    center = rot @ (0.5 * (lo + hi)) + h.center
    return Cuboid(center=center, size=size, yaw=h.yaw, class_label="human", node_id=h.node_id)


def hip_footprint(h: HumanPose, margin: float = 0.10) -> Polygon2D:
    """Square of side 2*margin around the hip, aligned with the pose yaw."""
    box = Cuboid(center=h.center, size=(2.0 * margin, 2.0 * margin, 1.0), yaw=h.yaw)
    return footprint_polygon(box)


def projected_hull(cam: Camera, c: Cuboid, image_size: Optional[Tuple[int, int]] = None) -> Optional[Polygon2D]:
    """Convex hull of the projected corners in front of the camera.

    Returns None when fewer than 3 corners are in front. Nearly collinear
    projections fall back to their bounding rectangle. With image_size the
    hull is clipped to the image rectangle.
    """
    uv, depth = project_points(cam, c.corners())
    uv = uv[depth > MIN_DEPTH]
    if len(uv) < 3:
        return None
    try:
        hull = convex_hull(uv)
    except DegenerateHullError:
        hull = Rect2D.from_points(uv).as_polygon()
    if image_size is not None:
        frame = Rect2D(0.0, 0.0, float(image_size[0]), float(image_size[1])).as_polygon()
        hull = Polygon2D(clip_polygon(hull.vertices, frame.vertices))
    return hull


_WALL_NORMALS = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def wall_plane(layout: Cuboid, index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Point on, and outward unit normal of, side face `index` of the layout."""
    local = _WALL_NORMALS[index]
    half = 0.5 * layout.size
    point = layout.center + layout.rotation @ (local * half)
    return point, layout.rotation @ local


def wall_gap(layout: Cuboid, index: int, points) -> float:
    """Distance between a wall plane and the point set's extreme toward it."""
    point, normal = wall_plane(layout, index)
    signed = (np.atleast_2d(points) - point) @ normal
    return abs(float(signed.max()))


def wall_face_overlap(layout: Cuboid, index: int, points) -> float:
    """Fraction of the point set's silhouette on side face `index` that lies on the face."""
    local = _WALL_NORMALS[index]
    along = layout.rotation @ np.array([-local[1], local[0], 0.0])
    rel = np.atleast_2d(points) - layout.center
    silhouette = Rect2D.from_points(np.column_stack([rel @ along, rel[:, 2]]))
    area = silhouette.area()
    if area <= 0:
        return 0.0
    half_length, half_height = 0.5 * layout.size[1 - index % 2], 0.5 * layout.size[2]
    on_face = Rect2D(max(silhouette.x_min, -half_length), max(silhouette.y_min, -half_height),
                     min(silhouette.x_max, half_length), min(silhouette.y_max, half_height))
    return min(1.0, on_face.area() / area)
