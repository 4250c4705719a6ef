"""Parse graph, node parametrizations and the pinhole camera model.

World frame is z-up; the floor is the bottom face of the layout cuboid.
All node types are immutable: moves build modified copies.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import InvalidParameterError

logger = logging.getLogger(__name__)


JOINT_NAMES: Tuple[str, ...] = (
    "hip", "spine", "neck", "head",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
    "nose",
)
JOINT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(JOINT_NAMES)}
NUM_JOINTS = len(JOINT_NAMES)
ANKLE_INDICES = (JOINT_INDEX["l_ankle"], JOINT_INDEX["r_ankle"])

# The six merged HOIs come first; the rest are pose-only actions.
HOI_ACTIONS: Tuple[str, ...] = ("read", "sit-at", "sit", "make-phone-call", "hold", "use-laptop")
ACTION_VOCABULARY: Tuple[str, ...] = HOI_ACTIONS + ("stand", "walk", "bend")
ACTION_INDEX: Dict[str, int] = {name: i for i, name in enumerate(ACTION_VOCABULARY)}

LAYOUT_ID = "layout"
FLOOR_ID = "floor"
# Side faces of the layout in its own frame: +x, +y, -x, -y.
WALL_IDS: Tuple[str, ...] = ("wall_0", "wall_1", "wall_2", "wall_3")


def normalize_yaw(theta: float) -> float:
    """Wrap an angle into [-pi, pi); in-range values are returned untouched."""
    theta = float(theta)
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def rotation_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _frozen_array(values, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise InvalidParameterError(f"expected array of shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def multi_hot(actions: Sequence[str]) -> Tuple[int, ...]:
    """Encode action names as a multi-hot vector over ACTION_VOCABULARY."""
    bits = [0] * len(ACTION_VOCABULARY)
    for name in actions:
        if name not in ACTION_INDEX:
            raise InvalidParameterError(f"unknown action label '{name}'")
        bits[ACTION_INDEX[name]] = 1
    return tuple(bits)


# Corner order: bottom face counterclockwise seen from above starting at the
# (-x, -y) local corner, then the top face in the same order.
_UNIT_CORNERS = np.array([
    [-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5],
    [-0.5, -0.5, 0.5], [0.5, -0.5, 0.5], [0.5, 0.5, 0.5], [-0.5, 0.5, 0.5],
])


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Oriented 3D box: center and full extents in meters, yaw about world z."""

    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0
    class_label: str = "object"
    is_container: bool = False
    node_id: str = ""
    synthesized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, (3,)))
        object.__setattr__(self, "size", _frozen_array(self.size, (3,)))
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @cached_property
    def rotation(self) -> np.ndarray:
        return rotation_z(self.yaw)

    def corners(self) -> np.ndarray:
        return cuboid_corners(self)

    @property
    def bottom_z(self) -> float:
        return float(self.center[2] - 0.5 * self.size[2])

    @property
    def top_z(self) -> float:
        return float(self.center[2] + 0.5 * self.size[2])

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def footprint(self) -> np.ndarray:
        """Bottom-face xy corners, counterclockwise."""
        return cuboid_corners(self)[:4, :2]

    def translated(self, delta) -> "Cuboid":
        return replace(self, center=self.center + np.asarray(delta, dtype=float))

    def rotated(self, dtheta: float) -> "Cuboid":
        return replace(self, yaw=self.yaw + dtheta)

    def scaled(self, factor: float) -> "Cuboid":
        if factor <= 0:
            raise InvalidParameterError(f"scale factor must be positive, got {factor}")
        return replace(self, size=self.size * factor)


def cuboid_corners(c: Cuboid) -> np.ndarray:
    """Return the 8 world-frame corners of a cuboid, shape (8, 3)."""
    local = _UNIT_CORNERS * c.size
    return local @ c.rotation.T + c.center


def cuboid_from_corners(corners, **attrs) -> Cuboid:
    """Fit center, size and yaw back from 8 corners in cuboid_corners order."""
    corners = np.asarray(corners, dtype=float)
    if corners.shape != (8, 3):
        raise InvalidParameterError(f"expected (8, 3) corners, got {corners.shape}")
    center = corners.mean(axis=0)
    edge_x = corners[1] - corners[0]
    edge_y = corners[2] - corners[1]
    size = (
        float(np.linalg.norm(edge_x[:2])),
        float(np.linalg.norm(edge_y[:2])),
        float(corners[4, 2] - corners[0, 2]),
    )
    yaw = math.atan2(edge_x[1], edge_x[0])
    return Cuboid(center=center, size=size, yaw=yaw, **attrs)


@dataclass(frozen=True, eq=False)
class HumanPose:
    """17-joint skeleton parametrized by hip center, scale, template and yaw.

    joints = Rot(yaw) . (scale * rel_joints) + center
    """

    center: np.ndarray
    scale: float
    rel_joints: np.ndarray
    yaw: float = 0.0
    actions: Tuple[int, ...] = field(default_factory=lambda: (0,) * len(ACTION_VOCABULARY))
    action_confidence: Tuple[float, ...] = field(default_factory=lambda: (0.0,) * len(ACTION_VOCABULARY))
    node_id: str = ""
    joints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, (3,)))
        object.__setattr__(self, "rel_joints", _frozen_array(self.rel_joints, (NUM_JOINTS, 3)))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))
        object.__setattr__(self, "actions", tuple(int(b) for b in self.actions))
        object.__setattr__(self, "action_confidence", tuple(float(c) for c in self.action_confidence))
        joints = (self.scale * self.rel_joints) @ rotation_z(self.yaw).T + self.center
        joints.flags.writeable = False
        object.__setattr__(self, "joints", joints)

    def joint(self, name: str) -> np.ndarray:
        return self.joints[JOINT_INDEX[name]]

    @property
    def feet_z(self) -> float:
        return float(min(self.joints[i, 2] for i in ANKLE_INDICES))

    def active_actions(self) -> List[str]:
        return [ACTION_VOCABULARY[i] for i, bit in enumerate(self.actions) if bit]

    def confidence(self, action: str) -> float:
        return self.action_confidence[ACTION_INDEX[action]]

    def translated(self, delta) -> "HumanPose":
        return replace(self, center=self.center + np.asarray(delta, dtype=float))

    def rotated(self, dtheta: float) -> "HumanPose":
        return replace(self, yaw=self.yaw + dtheta)

    def scaled(self, factor: float) -> "HumanPose":
        if factor <= 0:
            raise InvalidParameterError(f"scale factor must be positive, got {factor}")
        return replace(self, scale=self.scale * factor)


def pose_from_params(center, scale: float, rel_joints, yaw: float = 0.0,
                     actions: Sequence[str] = (), confidences: Optional[Dict[str, float]] = None,
                     node_id: str = "") -> HumanPose:
    """Build a HumanPose, materializing its world joints."""
    if not scale > 0:
        raise InvalidParameterError(f"pose scale must be positive, got {scale}")
    rel = np.asarray(rel_joints, dtype=float)
    if rel.shape != (NUM_JOINTS, 3):
        raise InvalidParameterError(f"rel_joints must have {NUM_JOINTS} rows of 3, got {rel.shape}")
    conf = [0.0] * len(ACTION_VOCABULARY)
    for name, value in (confidences or {}).items():
        conf[ACTION_INDEX[name]] = float(value)
    return HumanPose(center=center, scale=scale, rel_joints=rel, yaw=yaw,
                     actions=multi_hot(actions), action_confidence=tuple(conf), node_id=node_id)


def params_from_pose(joints, rel_joints) -> Tuple[np.ndarray, float, float]:
    """Recover (center, scale, yaw) from world joints and a known template.

    Center is the hip joint; scale and yaw come from a least-squares
    similarity fit restricted to rotations about z.
    """
    joints = np.asarray(joints, dtype=float)
    rel = np.asarray(rel_joints, dtype=float)
    center = joints[JOINT_INDEX["hip"]].copy()
    d = joints - center
    r_xy = rel[:, 0] + 1j * rel[:, 1]
    d_xy = d[:, 0] + 1j * d[:, 1]
    c = np.sum(np.conj(r_xy) * d_xy)
    yaw = float(np.angle(c)) if abs(c) > 1e-12 else 0.0
    denom = float(np.sum(rel * rel))
    if denom <= 0:
        raise InvalidParameterError("pose template is degenerate")
    scale = (abs(c) + float(np.dot(rel[:, 2], d[:, 2]))) / denom
    return center, scale, normalize_yaw(yaw)


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera; rotation maps world directions to the camera frame
    (x right, y down, z forward)."""

    intrinsics: np.ndarray
    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", _frozen_array(self.intrinsics, (3, 3)))
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, (3, 3)))
        object.__setattr__(self, "position", _frozen_array(self.position, (3,)))

    @classmethod
    def looking_at(cls, position, heading: float, pitch: float = 0.0, focal: float = 600.0,
                   principal_point: Tuple[float, float] = (320.0, 240.0)) -> "Camera":
        """Camera at `position` whose optical axis has the given heading (about z)
        and downward pitch, with no roll."""
        forward = np.array([math.cos(pitch) * math.cos(heading),
                            math.cos(pitch) * math.sin(heading),
                            -math.sin(pitch)])
        right = np.array([math.sin(heading), -math.cos(heading), 0.0])
        down = np.cross(forward, right)
        K = np.array([[focal, 0.0, principal_point[0]],
                      [0.0, focal, principal_point[1]],
                      [0.0, 0.0, 1.0]])
        return cls(intrinsics=K, rotation=np.vstack([right, down, forward]), position=position)

    @property
    def heading(self) -> float:
        forward = self.rotation[2]
        return math.atan2(forward[1], forward[0])

    def to_camera(self, points) -> np.ndarray:
        """World points (n, 3) to camera-frame coordinates."""
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation.T

    def ray_direction(self, pixel) -> np.ndarray:
        """World-frame direction of the ray through a pixel (not normalized)."""
        uv1 = np.array([pixel[0], pixel[1], 1.0])
        return self.rotation.T @ np.linalg.solve(self.intrinsics, uv1)

    def translated(self, delta) -> "Camera":
        return replace(self, position=self.position + np.asarray(delta, dtype=float))


@dataclass(frozen=True, eq=False)
class DetectedBox:
    class_label: str
    box: Tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    score: float = 1.0


@dataclass(frozen=True, eq=False)
class DetectedPose:
    """2D skeleton in pixels with visibility, action labels and confidences.

    local_joints, when present, is a hip-centered z-up 3D pose from an
    external lifter, in world-aligned axes.
    """

    joints_2d: np.ndarray
    visible: Tuple[bool, ...]
    actions: Tuple[int, ...]
    confidences: Tuple[float, ...]
    local_joints: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "joints_2d", _frozen_array(self.joints_2d, (NUM_JOINTS, 2)))
        if self.local_joints is not None:
            object.__setattr__(self, "local_joints", _frozen_array(self.local_joints, (NUM_JOINTS, 3)))
        object.__setattr__(self, "visible", tuple(bool(v) for v in self.visible))

    def confidence(self, action: str) -> float:
        return self.confidences[ACTION_INDEX[action]]

    def active_actions(self) -> List[str]:
        return [ACTION_VOCABULARY[i] for i, bit in enumerate(self.actions) if bit]


@dataclass(frozen=True, eq=False)
class Observations:
    """Per-image evidence. layout_hint carries room metadata when known."""

    camera: Camera
    det_boxes: Tuple[DetectedBox, ...] = ()
    det_poses: Tuple[DetectedPose, ...] = ()
    image_size: Tuple[int, int] = (640, 480)
    layout_hint: Optional[Cuboid] = None

    @property
    def image_diagonal(self) -> float:
        return math.hypot(*self.image_size)

    def normalized(self) -> "Observations":
        """Clamp boxes into the image and mark out-of-frame joints invisible."""
        width, height = self.image_size
        boxes = []
        for det in self.det_boxes:
            if not 0.0 <= det.score <= 1.0:
                raise InvalidParameterError(f"detection score {det.score} outside [0, 1]")
            x0, y0, x1, y1 = det.box
            x0, x1 = sorted((min(max(x0, 0.0), width), min(max(x1, 0.0), width)))
            y0, y1 = sorted((min(max(y0, 0.0), height), min(max(y1, 0.0), height)))
            boxes.append(replace(det, box=(x0, y0, x1, y1)))
        poses = []
        for det in self.det_poses:
            if any(not 0.0 <= c <= 1.0 for c in det.confidences):
                raise InvalidParameterError("action confidence outside [0, 1]")
            uv = det.joints_2d
            in_frame = (uv[:, 0] >= 0) & (uv[:, 0] <= width) & (uv[:, 1] >= 0) & (uv[:, 1] <= height)
            visible = tuple(bool(v and f) for v, f in zip(det.visible, in_frame))
            poses.append(replace(det, visible=visible))
        return replace(self, det_boxes=tuple(boxes), det_poses=tuple(poses))


Node = Union[Cuboid, HumanPose]


@dataclass(frozen=True, eq=False)
class ParseGraph:
    """Full scene hypothesis.

    assoc maps node ids to detection indices (objects into det_boxes,
    humans into det_poses); it is fixed once the graph is initialized.
    """

    layout: Cuboid
    camera: Camera
    objects: Tuple[Cuboid, ...] = ()
    humans: Tuple[HumanPose, ...] = ()
    support_edges: Tuple[Tuple[str, str], ...] = ()
    hoi_edges: Tuple[Tuple[str, str, str], ...] = ()
    assoc: Dict[str, int] = field(default_factory=dict)

    @cached_property
    def _object_index(self) -> Dict[str, int]:
        return {o.node_id: i for i, o in enumerate(self.objects)}

    @cached_property
    def _human_index(self) -> Dict[str, int]:
        return {h.node_id: i for i, h in enumerate(self.humans)}

    @cached_property
    def _supporter_of(self) -> Dict[str, str]:
        return {child: parent for child, parent in self.support_edges}

    def node(self, node_id: str) -> Optional[Node]:
        if node_id in self._object_index:
            return self.objects[self._object_index[node_id]]
        if node_id in self._human_index:
            return self.humans[self._human_index[node_id]]
        if node_id == LAYOUT_ID:
            return self.layout
        return None

    def get_object(self, node_id: str) -> Optional[Cuboid]:
        idx = self._object_index.get(node_id)
        return None if idx is None else self.objects[idx]

    def get_human(self, node_id: str) -> Optional[HumanPose]:
        idx = self._human_index.get(node_id)
        return None if idx is None else self.humans[idx]

    def supporter_of(self, node_id: str) -> Optional[str]:
        return self._supporter_of.get(node_id)

    @property
    def object_ids(self) -> List[str]:
        return [o.node_id for o in self.objects]

    @property
    def human_ids(self) -> List[str]:
        return [h.node_id for h in self.humans]

    @property
    def floor_z(self) -> float:
        return self.layout.bottom_z

    def with_node(self, node: Node) -> "ParseGraph":
        """Copy with the node of the same id replaced."""
        if isinstance(node, HumanPose):
            idx = self._human_index[node.node_id]
            return replace(self, humans=self.humans[:idx] + (node,) + self.humans[idx + 1:])
        if node.node_id == LAYOUT_ID:
            return replace(self, layout=node)
        idx = self._object_index[node.node_id]
        return replace(self, objects=self.objects[:idx] + (node,) + self.objects[idx + 1:])

    def hoi_partners(self, node_id: str) -> List[Tuple[str, str, str]]:
        return [e for e in self.hoi_edges if node_id in (e[0], e[1])]


def translate_scene(pg: ParseGraph, delta) -> ParseGraph:
    """Rigidly translate every node and the camera by a world vector."""
    delta = np.asarray(delta, dtype=float)
    return replace(
        pg,
        layout=pg.layout.translated(delta),
        camera=pg.camera.translated(delta),
        objects=tuple(o.translated(delta) for o in pg.objects),
        humans=tuple(h.translated(delta) for h in pg.humans),
    )


class Violation(NamedTuple):
    node_id: str
    invariant: str
    detail: str = ""


def validate(pg: ParseGraph) -> List[Violation]:
    """Check ParseGraph invariants; an empty list means the graph is well formed."""
    violations: List[Violation] = []

    seen = set()
    for node_id in [pg.layout.node_id or LAYOUT_ID] + pg.object_ids + pg.human_ids:
        if node_id in seen:
            violations.append(Violation(node_id, "duplicate node id"))
        seen.add(node_id)

    for box in (pg.layout,) + pg.objects:
        if np.any(box.size <= 0):
            violations.append(Violation(box.node_id or LAYOUT_ID, "nonpositive extent",
                                        f"size={box.size.tolist()}"))
    for human in pg.humans:
        if not human.scale > 0:
            violations.append(Violation(human.node_id, "nonpositive scale", f"scale={human.scale}"))

    supporters = set(pg.object_ids) | set(pg.human_ids) | {FLOOR_ID} | set(WALL_IDS)
    counts: Dict[str, int] = {}
    for child, parent in pg.support_edges:
        counts[child] = counts.get(child, 0) + 1
        if child not in seen:
            violations.append(Violation(child, "dangling support edge", "supported node missing"))
        if parent not in supporters or parent == child:
            violations.append(Violation(child, "dangling support edge", f"supporter '{parent}'"))
    for node_id in pg.object_ids + pg.human_ids:
        n = counts.get(node_id, 0)
        if n == 0:
            violations.append(Violation(node_id, "missing support edge"))
        elif n > 1:
            violations.append(Violation(node_id, "multiple support edges", f"{n} edges"))

    for human_id, object_id, action in pg.hoi_edges:
        human = pg.get_human(human_id)
        if human is None or pg.get_object(object_id) is None:
            violations.append(Violation(human_id, "dangling hoi edge", f"-> {object_id}"))
            continue
        if action not in human.active_actions():
            violations.append(Violation(human_id, "inactive hoi action", action))

    cam = pg.camera
    if np.max(np.abs(cam.rotation.T @ cam.rotation - np.eye(3))) >= 1e-9:
        violations.append(Violation("camera", "non-orthonormal rotation"))
    K = cam.intrinsics
    if K[2, 2] != 1.0 or K[1, 0] != 0.0 or K[2, 0] != 0.0 or K[2, 1] != 0.0:
        violations.append(Violation("camera", "malformed intrinsics"))

    return violations
