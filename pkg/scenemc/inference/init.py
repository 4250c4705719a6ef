"""Cooperative initialization: layout, back-projected objects, lifted humans, support edges."""

import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.errors import InitializationError, UnliftablePoseError
from ..energy.terms import support_term
from ..scene.geometry import MIN_DEPTH
from ..scene.model import (
    ACTION_VOCABULARY,
    ANKLE_INDICES,
    FLOOR_ID,
    JOINT_INDEX,
    LAYOUT_ID,
    WALL_IDS,
    Camera,
    Cuboid,
    DetectedBox,
    DetectedPose,
    HumanPose,
    Observations,
    ParseGraph,
    params_from_pose,
    rotation_z,
)
from ..synthetic.templates import template_for

logger = logging.getLogger(__name__)

# Full extents (width, depth, height) in meters.
DEFAULT_CLASS_SIZES: Dict[str, Tuple[float, float, float]] = {
    "chair": (0.5, 0.5, 0.9),
    "sofa": (1.8, 0.9, 0.8),
    "bed": (2.0, 1.6, 0.5),
    "stool": (0.4, 0.4, 0.45),
    "table": (1.2, 0.8, 0.75),
    "desk": (1.4, 0.7, 0.75),
    "cabinet": (0.8, 0.5, 1.2),
    "drawer": (0.6, 0.5, 0.8),
    "shelf": (0.9, 0.35, 1.8),
    "laptop": (0.35, 0.25, 0.03),
    "bottle": (0.08, 0.08, 0.25),
    "cup": (0.08, 0.08, 0.1),
    "phone": (0.08, 0.02, 0.15),
    "book": (0.2, 0.15, 0.04),
    "notebook": (0.21, 0.15, 0.02),
    "tablet": (0.25, 0.18, 0.01),
    "monitor": (0.55, 0.2, 0.45),
    "picture": (0.6, 0.04, 0.45),
}
DEFAULT_OBJECT_SIZE = (0.5, 0.5, 0.5)

# Height of the surface a class usually rests on, above the floor.
DEFAULT_SUPPORT_HEIGHTS: Dict[str, float] = {
    "laptop": 0.75,
    "bottle": 0.75,
    "cup": 0.75,
    "phone": 0.75,
    "book": 0.75,
    "notebook": 0.75,
    "tablet": 0.75,
    "monitor": 0.75,
    "picture": 1.2,
}

CONTAINER_CLASSES = frozenset({"cabinet", "desk", "drawer", "shelf"})

DEFAULT_H0: Dict[str, float] = {"head": 1.7, "hip": 0.9}

_HAND_CLASSES = ("bottle", "cup", "phone", "book", "notebook", "tablet")
_WALL_CLASSES = ("picture", "clock", "mirror", "whiteboard", "tv")


def _default_support_probabilities() -> Dict[str, Dict[str, float]]:
    table = {cls: {"human": 1.0} for cls in _HAND_CLASSES}
    for cls in _WALL_CLASSES:
        table[cls] = {"wall": 1.0}
    return table


class SupportPriorTable(BaseModel):
    """Multinoulli support priors p(supporter class | supported class).

    Supporter classes are object labels plus "floor", "wall" and "human".
    Rows need not normalize; scores are only compared.
    """

    model_config = ConfigDict(extra="forbid")

    probabilities: Dict[str, Dict[str, float]] = Field(default_factory=_default_support_probabilities)
    default_probability: float = Field(default=1.0, ge=0.0, le=1.0, description="Unlisted object or floor supporter")
    wall_probability: float = Field(default=0.05, ge=0.0, le=1.0, description="Unlisted wall supporter")
    human_probability: float = Field(default=0.0, ge=0.0, le=1.0, description="Unlisted human supporter")
    lambda_s: float = Field(default=1.0, ge=0.0, description="Balancing constant of the prior")
    hand_reach: float = Field(default=0.25, gt=0.0, description="Max wrist distance for a human supporter")

    @field_validator("probabilities")
    @classmethod
    def _check_range(cls, value):
        for child, row in value.items():
            for parent, p in row.items():
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"p({parent} | {child}) = {p} outside [0, 1]")
        return value

    def probability(self, supported: str, supporter: str) -> float:
        row = self.probabilities.get(supported, {})
        if supporter in row:
            return row[supporter]
        if supporter == "wall":
            return self.wall_probability
        if supporter == "human":
            return self.human_probability
        return self.default_probability


def _supporter_class(pg: ParseGraph, supporter_id: str) -> str:
    if supporter_id == FLOOR_ID:
        return "floor"
    if supporter_id in WALL_IDS:
        return "wall"
    if pg.get_human(supporter_id) is not None:
        return "human"
    return pg.get_object(supporter_id).class_label


def _top_surface(pg: ParseGraph, supporter_id: str) -> float:
    if supporter_id == FLOOR_ID:
        return pg.floor_z
    if supporter_id in WALL_IDS:
        return pg.layout.top_z
    node = pg.node(supporter_id)
    if isinstance(node, HumanPose):
        return float(node.joints[:, 2].max())
    return node.top_z


def support_candidates(pg: ParseGraph, node_id: str, table: SupportPriorTable) -> List[str]:
    """Possible supporters of a node: floor, walls, lower objects and nearby hands."""
    node = pg.node(node_id)
    if isinstance(node, HumanPose):
        return [FLOOR_ID]
    candidates = [FLOOR_ID] + list(WALL_IDS)
    for other in pg.objects:
        if other.node_id != node_id and other.top_z <= node.center[2]:
            candidates.append(other.node_id)
    for human in pg.humans:
        wrists = np.stack([human.joint("l_wrist"), human.joint("r_wrist")])
        if float(np.min(np.linalg.norm(wrists - node.center, axis=1))) <= table.hand_reach:
            candidates.append(human.node_id)
    return candidates


def support_score(pg: ParseGraph, node_id: str, supporter_id: str, table: SupportPriorTable,
                  human_margin: float = 0.10, wall_contact_margin: float = 0.05) -> float:
    """E_o + E_height - lambda_s * log p_spt; infinite when the prior is zero."""
    node = pg.node(node_id)
    supported = "human" if isinstance(node, HumanPose) else node.class_label
    p = table.probability(supported, _supporter_class(pg, supporter_id))
    if p <= 0.0:
        return math.inf
    energy = support_term(pg, node_id, supporter_id, human_margin, wall_contact_margin)
    return energy - table.lambda_s * math.log(p)


def choose_supporter(pg: ParseGraph, node_id: str, table: SupportPriorTable, **margins) -> str:
    """Supporter minimizing the support score; ties go to the lower top surface, then lower id."""
    best = None
    for cand in support_candidates(pg, node_id, table):
        key = (support_score(pg, node_id, cand, table, **margins), _top_surface(pg, cand), cand)
        if best is None or key < best:
            best = key
    if best is None or math.isinf(best[0]):
        logger.warning(f"No admissible supporter for {node_id}; falling back to the floor")
        return FLOOR_ID
    return best[2]


def assign_support(pg: ParseGraph, table: SupportPriorTable, **margins) -> ParseGraph:
    """Recompute one support edge per object and human."""
    edges = []
    for node_id in sorted(pg.object_ids) + sorted(pg.human_ids):
        edges.append((node_id, choose_supporter(pg, node_id, table, **margins)))
    return replace(pg, support_edges=tuple(edges))


def default_layout(cam: Camera, floor_z: float, room_size: Sequence[float] = (6.0, 6.0, 3.0)) -> Cuboid:
    """Room box whose near wall passes behind the camera, facing its heading."""
    heading = cam.heading
    forward = np.array([math.cos(heading), math.sin(heading), 0.0])
    width, depth, height = room_size
    center_xy = cam.position[:2] + forward[:2] * (0.5 * depth - 0.5)
    center = np.array([center_xy[0], center_xy[1], floor_z + 0.5 * height])
    return Cuboid(center=center, size=(depth, width, height), yaw=heading, class_label="layout", node_id=LAYOUT_ID)


def lift_pose_to_world(local_pose, anchor_joint_2d, cam: Camera, h0: float, anchor: str = "hip",
                       template: Optional[np.ndarray] = None, actions: Sequence[str] = (),
                       confidences: Optional[Dict[str, float]] = None, node_id: str = "") -> HumanPose:
    """Place a hip-centered 3D pose so its anchor joint lies on the anchor ray at height h0.

    The pose is translated rigidly; its axes stay world aligned. Yaw and scale
    are read off the template when one is given.
    """
    local = np.asarray(local_pose, dtype=float)
    direction = cam.ray_direction(anchor_joint_2d)
    if abs(direction[2]) < 1e-9:
        raise UnliftablePoseError(f"anchor ray through {tuple(anchor_joint_2d)} is parallel to z = {h0}")
    t = (h0 - cam.position[2]) / direction[2]
    if t <= MIN_DEPTH:
        raise UnliftablePoseError(f"anchor ray through {tuple(anchor_joint_2d)} meets z = {h0} behind the camera")
    target = cam.position + t * direction

    world = local - local[JOINT_INDEX[anchor]] + target
    hip = world[JOINT_INDEX["hip"]]
    yaw = 0.0
    if template is not None:
        _, _, yaw = params_from_pose(world, template)
    rel = (world - hip) @ rotation_z(yaw)
    conf = [0.0] * len(ACTION_VOCABULARY)
    for name, value in (confidences or {}).items():
        conf[ACTION_VOCABULARY.index(name)] = float(value)
    bits = [1 if name in actions else 0 for name in ACTION_VOCABULARY]
    return HumanPose(center=hip, scale=1.0, rel_joints=rel, yaw=yaw, actions=tuple(bits),
                     action_confidence=tuple(conf), node_id=node_id)


def _place_object(det: DetectedBox, index: int, cam: Camera, layout: Cuboid,
                  class_sizes: Dict[str, Tuple[float, float, float]],
                  support_heights: Dict[str, float]) -> Cuboid:
    size = np.array(class_sizes.get(det.class_label, DEFAULT_OBJECT_SIZE), dtype=float)
    z = layout.bottom_z + support_heights.get(det.class_label, 0.0) + 0.5 * size[2]
    x0, y0, x1, y1 = det.box
    pixel = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    direction = cam.ray_direction(pixel)
    t = (z - cam.position[2]) / direction[2] if abs(direction[2]) > 1e-9 else -1.0
    if t <= MIN_DEPTH:
        # ray misses the class height plane; size the depth from the box height instead
        focal = cam.intrinsics[1, 1]
        depth = focal * size[2] / max(y1 - y0, 1.0)
        t = depth / float(cam.rotation[2] @ direction)
        logger.debug(f"Detection {index} ({det.class_label}) placed from box height at depth {depth:.2f} m")
    center = cam.position + t * direction
    return Cuboid(center=center, size=size, yaw=layout.yaw, class_label=det.class_label,
                  is_container=det.class_label in CONTAINER_CLASSES, node_id=f"obj_{index}")


def _lift_detection(det: DetectedPose, index: int, cam: Camera, floor_z: float,
                    h0_table: Dict[str, float], lift_from_floor_contact: bool) -> HumanPose:
    actions = det.active_actions()
    template = template_for(actions)
    if det.local_joints is not None:
        local = np.asarray(det.local_joints, dtype=float)
    else:
        # no lifter output: template facing the camera
        local = template @ rotation_z(cam.heading + math.pi).T
    local = local - local[JOINT_INDEX["hip"]]

    anchor = None
    for name in ("hip", "head"):
        if det.visible[JOINT_INDEX[name]]:
            anchor = name
            break
    if anchor is None:
        raise UnliftablePoseError(f"pose {index} has neither hip nor head visible")

    if lift_from_floor_contact:
        feet = min(local[i, 2] for i in ANKLE_INDICES)
        h0 = floor_z + local[JOINT_INDEX[anchor], 2] - feet
    else:
        h0 = floor_z + h0_table.get(anchor, DEFAULT_H0[anchor])
    confidences = {name: det.confidences[i] for i, name in enumerate(ACTION_VOCABULARY) if det.confidences[i]}
    return lift_pose_to_world(local, det.joints_2d[JOINT_INDEX[anchor]], cam, h0, anchor=anchor,
                              template=template, actions=actions, confidences=confidences,
                              node_id=f"human_{index}")


def init_scene(obs: Observations, support_priors: Optional[SupportPriorTable] = None,
               class_sizes: Optional[Dict[str, Tuple[float, float, float]]] = None,
               support_heights: Optional[Dict[str, float]] = None,
               h0: Optional[Dict[str, float]] = None, layout: Optional[Cuboid] = None,
               floor_z: Optional[float] = None, lift_from_floor_contact: bool = False,
               human_margin: float = 0.10, wall_contact_margin: float = 0.05) -> ParseGraph:
    """Build the initial parse graph: one node per detection, associated by index."""
    support_priors = support_priors or SupportPriorTable()
    class_sizes = {**DEFAULT_CLASS_SIZES, **(class_sizes or {})}
    support_heights = {**DEFAULT_SUPPORT_HEIGHTS, **(support_heights or {})}
    h0 = {**DEFAULT_H0, **(h0 or {})}
    obs = obs.normalized()
    cam = obs.camera

    if layout is None:
        layout = obs.layout_hint
    if layout is None and floor_z is not None:
        layout = default_layout(cam, floor_z)
    if layout is None:
        raise InitializationError("no floor hypothesis: observations carry no layout and no floor height is set")
    if layout.node_id != LAYOUT_ID:
        layout = replace(layout, node_id=LAYOUT_ID)

    objects = tuple(_place_object(det, i, cam, layout, class_sizes, support_heights)
                    for i, det in enumerate(obs.det_boxes))
    humans = tuple(_lift_detection(det, i, cam, layout.bottom_z, h0, lift_from_floor_contact)
                   for i, det in enumerate(obs.det_poses))
    assoc = {o.node_id: i for i, o in enumerate(objects)}
    assoc.update({h.node_id: i for i, h in enumerate(humans)})

    pg = ParseGraph(layout=layout, camera=cam, objects=objects, humans=humans, assoc=assoc)
    pg = assign_support(pg, support_priors, human_margin=human_margin, wall_contact_margin=wall_contact_margin)
    logger.info(f"Initialized {len(objects)} objects and {len(humans)} humans")
    return pg
