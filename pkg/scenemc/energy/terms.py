"""Energy terms: support, collision, HOI and reprojection likelihood.

Lower is better. Sums run in sorted node-id order so totals are
reproducible regardless of how the graph was assembled.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import DanglingEdgeError, InvalidParameterError
from ..hoi.prior import HoiPriorSet, interaction_nll
from ..scene.geometry import (
    MIN_DEPTH,
    Polygon2D,
    Rect2D,
    footprint_polygon,
    hip_footprint,
    human_hull_volume_proxy,
    intersection_volume,
    iou_2d,
    polygon_intersection_area,
    project_points,
    projected_hull,
    volume_outside,
    wall_face_overlap,
    wall_gap,
)
from ..scene.model import FLOOR_ID, WALL_IDS, Cuboid, HumanPose, Node, Observations, ParseGraph

logger = logging.getLogger(__name__)

ABLATIONS = ("full", "no-hoi", "no-phy")
OBJECT_LIKELIHOOD_MODES = ("hull", "hull-bounds")


class EnergyWeights(BaseModel):
    """Balancing factors of the total energy."""

    model_config = ConfigDict(extra="forbid")

    w_support: float = Field(default=1.0, ge=0.0, description="Support term weight")
    w_collision: float = Field(default=1.0, ge=0.0, description="Collision term weight")
    w_hoi: float = Field(default=1.0, ge=0.0, description="HOI term weight")
    w_likelihood_obj: float = Field(default=1.0, ge=0.0, description="Object reprojection weight")
    w_likelihood_pose: float = Field(default=1.0, ge=0.0, description="Pose reprojection weight")

    @classmethod
    def ablation(cls, name: str, base: Optional["EnergyWeights"] = None) -> "EnergyWeights":
        """Weights for a named ablation: full, no-hoi or no-phy."""
        base = base or cls()
        if name == "full":
            return base.model_copy()
        if name == "no-hoi":
            return base.model_copy(update={"w_hoi": 0.0})
        if name == "no-phy":
            return base.model_copy(update={"w_support": 0.0, "w_collision": 0.0})
        raise InvalidParameterError(f"unknown ablation '{name}', expected one of {', '.join(ABLATIONS)}")


@dataclass
class EnergyBreakdown:
    e_support: float = 0.0
    e_collision: float = 0.0
    e_hoi: float = 0.0
    e_likelihood_obj: float = 0.0
    e_likelihood_pose: float = 0.0
    total: float = 0.0
    per_node: Dict[str, float] = field(default_factory=dict)

    @property
    def e_likelihood(self) -> float:
        return self.e_likelihood_obj + self.e_likelihood_pose

    def weighted_total(self, weights: EnergyWeights) -> float:
        return (weights.w_support * self.e_support
                + weights.w_collision * self.e_collision
                + weights.w_hoi * self.e_hoi
                + weights.w_likelihood_obj * self.e_likelihood_obj
                + weights.w_likelihood_pose * self.e_likelihood_pose)

    def as_dict(self) -> Dict[str, float]:
        return {
            "e_support": self.e_support,
            "e_collision": self.e_collision,
            "e_hoi": self.e_hoi,
            "e_likelihood": self.e_likelihood,
            "e_likelihood_obj": self.e_likelihood_obj,
            "e_likelihood_pose": self.e_likelihood_pose,
            "total": self.total,
        }

    def __str__(self) -> str:
        return (f"total={self.total:.4f} (support={self.e_support:.4f}, collision={self.e_collision:.4f}, "
                f"hoi={self.e_hoi:.4f}, likelihood={self.e_likelihood:.4f})")


# -- support --------------------------------------------------------------

def _bottom_z(node: Node) -> float:
    return node.feet_z if isinstance(node, HumanPose) else node.bottom_z


def _footprint(node: Node, human_margin: float) -> Polygon2D:
    return hip_footprint(node, human_margin) if isinstance(node, HumanPose) else footprint_polygon(node)


def _points(node: Node) -> np.ndarray:
    return node.joints if isinstance(node, HumanPose) else node.corners()


def support_term(pg: ParseGraph, child_id: str, parent_id: str,
                 human_margin: float = 0.10, wall_contact_margin: float = 0.05) -> float:
    """E_o + E_height for a single support edge."""
    child = pg.node(child_id)
    if child is None:
        raise DanglingEdgeError(f"support edge from unknown node '{child_id}'")
    if parent_id == FLOOR_ID:
        return abs(_bottom_z(child) - pg.floor_z)
    if parent_id in WALL_IDS:
        # E_height is 0 against a wall; the face only counts as touched within the contact margin
        index = WALL_IDS.index(parent_id)
        points = _points(child)
        if wall_gap(pg.layout, index, points) > wall_contact_margin:
            return 1.0
        return 1.0 - wall_face_overlap(pg.layout, index, points)
    parent = pg.node(parent_id)
    if parent is None:
        raise DanglingEdgeError(f"'{child_id}' is supported by unknown node '{parent_id}'")
    if isinstance(parent, HumanPose):
        # hand-held objects
        return 0.0
    child_fp = _footprint(child, human_margin)
    area = child_fp.area()
    overlap = 0.0 if area <= 0 else min(1.0, polygon_intersection_area(child_fp, footprint_polygon(parent)) / area)
    return (1.0 - overlap) + abs(_bottom_z(child) - parent.top_z)


def support_energy(pg: ParseGraph, human_margin: float = 0.10, wall_contact_margin: float = 0.05) -> float:
    """Sum of E_o + E_height over all support edges."""
    return sum(support_term(pg, child, parent, human_margin, wall_contact_margin)
               for child, parent in sorted(pg.support_edges))


# -- collision ------------------------------------------------------------

def _hoi_pairs(pg: ParseGraph) -> Set[FrozenSet[str]]:
    return {frozenset((h, o)) for h, o, _ in pg.hoi_edges}


def _volume_of(node: Node, human_margin: float) -> Cuboid:
    return human_hull_volume_proxy(node, human_margin) if isinstance(node, HumanPose) else node


def out_of_room_term(pg: ParseGraph, node: Node, human_margin: float = 0.10) -> float:
    return volume_outside(_volume_of(node, human_margin), pg.layout)


def pair_collision_term(a: Node, b: Node, hoi_pairs: Set[FrozenSet[str]], human_margin: float = 0.10) -> float:
    a_human, b_human = isinstance(a, HumanPose), isinstance(b, HumanPose)
    if a_human and b_human:
        return 0.0
    if a_human or b_human:
        if frozenset((a.node_id, b.node_id)) in hoi_pairs:
            return 0.0
    elif a.is_container or b.is_container:
        return 0.0
    # canonical order keeps the pair value independent of argument order
    if b.node_id < a.node_id:
        a, b = b, a
    return intersection_volume(_volume_of(a, human_margin), _volume_of(b, human_margin))


def collision_energy(pg: ParseGraph, human_margin: float = 0.10) -> float:
    """Out-of-room volume plus pairwise intersections (HOI and container pairs exempt)."""
    nodes = sorted(list(pg.objects) + list(pg.humans), key=lambda n: n.node_id)
    hoi_pairs = _hoi_pairs(pg)
    total = 0.0
    for i, a in enumerate(nodes):
        total += out_of_room_term(pg, a, human_margin)
        for b in nodes[i + 1:]:
            total += pair_collision_term(a, b, hoi_pairs, human_margin)
    return total


# -- HOI --------------------------------------------------------------------

def hoi_term(pg: ParseGraph, edge: Tuple[str, str, str], priors: HoiPriorSet) -> float:
    human_id, object_id, action = edge
    human, obj = pg.get_human(human_id), pg.get_object(object_id)
    if human is None or obj is None:
        raise DanglingEdgeError(f"hoi edge {human_id} -> {object_id} references a missing node")
    return interaction_nll(priors.get(action), human, obj)


def hoi_energy(pg: ParseGraph, priors: HoiPriorSet) -> float:
    """Sum of prior negative log densities over the HOI edges."""
    return sum(hoi_term(pg, edge, priors) for edge in sorted(pg.hoi_edges))


# -- likelihood -------------------------------------------------------------

def object_likelihood_term(pg: ParseGraph, obj: Cuboid, obs: Observations, det_index: int,
                           behind_camera_penalty: float = 1.0, mode: str = "hull") -> float:
    """1 - IoU between the projected hull and the detection box."""
    hull = projected_hull(pg.camera, obj, obs.image_size)
    if hull is None:
        return behind_camera_penalty
    if mode == "hull-bounds" and not hull.is_empty:
        hull = hull.bounds().as_polygon()
    return 1.0 - iou_2d(hull, Rect2D.from_box(obs.det_boxes[det_index].box))


def pose_likelihood_term(pg: ParseGraph, human: HumanPose, obs: Observations, det_index: int,
                         behind_camera_penalty: float = 1.0, invisible_pose_penalty: float = 1.0) -> float:
    """Mean pixel distance over visible joints, divided by the image diagonal."""
    det = obs.det_poses[det_index]
    visible = np.array(det.visible, dtype=bool)
    if not visible.any():
        return invisible_pose_penalty
    uv, depth = project_points(pg.camera, human.joints[visible])
    if np.any(depth <= MIN_DEPTH):
        return behind_camera_penalty
    dist = np.linalg.norm(uv - det.joints_2d[visible], axis=1)
    return float(dist.mean()) / obs.image_diagonal


def likelihood_energy(pg: ParseGraph, obs: Observations, assoc: Optional[Dict[str, int]] = None,
                      w_pose_scale: float = 1.0, behind_camera_penalty: float = 1.0,
                      invisible_pose_penalty: float = 1.0, object_likelihood: str = "hull") -> float:
    """D_o over associated objects plus w_pose_scale times D_h over humans."""
    assoc = pg.assoc if assoc is None else assoc
    obj_sum, pose_sum = 0.0, 0.0
    for obj in sorted(pg.objects, key=lambda o: o.node_id):
        if obj.synthesized or obj.node_id not in assoc:
            continue
        obj_sum += object_likelihood_term(pg, obj, obs, assoc[obj.node_id], behind_camera_penalty, object_likelihood)
    for human in sorted(pg.humans, key=lambda h: h.node_id):
        if human.node_id not in assoc:
            continue
        pose_sum += pose_likelihood_term(pg, human, obs, assoc[human.node_id],
                                         behind_camera_penalty, invisible_pose_penalty)
    return obj_sum + w_pose_scale * pose_sum


class EnergyModel:
    """Evaluates the weighted total energy of parse graphs for one set of observations."""

    def __init__(self, obs: Observations, priors: HoiPriorSet, weights: Optional[EnergyWeights] = None,
                 human_margin: float = 0.10, wall_contact_margin: float = 0.05,
                 behind_camera_penalty: float = 1.0, invisible_pose_penalty: float = 1.0,
                 object_likelihood: str = "hull"):
        if object_likelihood not in OBJECT_LIKELIHOOD_MODES:
            raise InvalidParameterError(f"unknown object likelihood mode '{object_likelihood}'")
        self.obs = obs
        self.priors = priors
        self.weights = weights or EnergyWeights()
        self.human_margin = human_margin
        self.wall_contact_margin = wall_contact_margin
        self.behind_camera_penalty = behind_camera_penalty
        self.invisible_pose_penalty = invisible_pose_penalty
        self.object_likelihood = object_likelihood
        self._warned: Set[str] = set()

    def with_weights(self, weights: EnergyWeights) -> "EnergyModel":
        return EnergyModel(self.obs, self.priors, weights, self.human_margin, self.wall_contact_margin,
                           self.behind_camera_penalty, self.invisible_pose_penalty, self.object_likelihood)

    # per-unit terms; each returns unweighted values

    def _support(self, pg: ParseGraph, child: str, parent: str) -> float:
        return support_term(pg, child, parent, self.human_margin, self.wall_contact_margin)

    def _object_likelihood(self, pg: ParseGraph, obj: Cuboid) -> float:
        if obj.synthesized or obj.node_id not in pg.assoc:
            return 0.0
        return object_likelihood_term(pg, obj, self.obs, pg.assoc[obj.node_id],
                                      self.behind_camera_penalty, self.object_likelihood)

    def _pose_likelihood(self, pg: ParseGraph, human: HumanPose) -> float:
        if human.node_id not in pg.assoc:
            return 0.0
        det = self.obs.det_poses[pg.assoc[human.node_id]]
        if not any(det.visible) and human.node_id not in self._warned:
            self._warned.add(human.node_id)
            logger.warning(f"{human.node_id} has no visible joints; using fixed penalty {self.invisible_pose_penalty}")
        return pose_likelihood_term(pg, human, self.obs, pg.assoc[human.node_id],
                                    self.behind_camera_penalty, self.invisible_pose_penalty)

    def breakdown(self, pg: ParseGraph) -> EnergyBreakdown:
        w = self.weights
        out = EnergyBreakdown()
        per_node: Dict[str, float] = {}

        def credit(node_id: str, value: float):
            per_node[node_id] = per_node.get(node_id, 0.0) + value

        for child, parent in sorted(pg.support_edges):
            value = self._support(pg, child, parent)
            out.e_support += value
            credit(child, w.w_support * value)

        nodes = sorted(list(pg.objects) + list(pg.humans), key=lambda n: n.node_id)
        hoi_pairs = _hoi_pairs(pg)
        for i, a in enumerate(nodes):
            value = out_of_room_term(pg, a, self.human_margin)
            out.e_collision += value
            credit(a.node_id, w.w_collision * value)
            for b in nodes[i + 1:]:
                value = pair_collision_term(a, b, hoi_pairs, self.human_margin)
                if value:
                    out.e_collision += value
                    credit(a.node_id, 0.5 * w.w_collision * value)
                    credit(b.node_id, 0.5 * w.w_collision * value)

        for edge in sorted(pg.hoi_edges):
            value = hoi_term(pg, edge, self.priors)
            out.e_hoi += value
            credit(edge[0], 0.5 * w.w_hoi * value)
            credit(edge[1], 0.5 * w.w_hoi * value)

        for obj in sorted(pg.objects, key=lambda o: o.node_id):
            value = self._object_likelihood(pg, obj)
            out.e_likelihood_obj += value
            credit(obj.node_id, w.w_likelihood_obj * value)
        for human in sorted(pg.humans, key=lambda h: h.node_id):
            value = self._pose_likelihood(pg, human)
            out.e_likelihood_pose += value
            credit(human.node_id, w.w_likelihood_pose * value)

        out.total = out.weighted_total(w)
        out.per_node = dict(sorted(per_node.items()))
        return out

    def total(self, pg: ParseGraph) -> float:
        return self.breakdown(pg).total

    def node_energy(self, pg: ParseGraph, node_id: str) -> float:
        """Weighted sum of every term that depends on the given node.

        The difference of this quantity before and after a single-node move
        equals the change of the full total.
        """
        w = self.weights
        node = pg.node(node_id)
        if node is None:
            raise DanglingEdgeError(f"unknown node '{node_id}'")
        if node is pg.layout:
            raise InvalidParameterError("layout moves change every term; use breakdown()")
        total = 0.0

        if w.w_support:
            for child, parent in sorted(pg.support_edges):
                if node_id in (child, parent):
                    total += w.w_support * self._support(pg, child, parent)

        if w.w_collision:
            hoi_pairs = _hoi_pairs(pg)
            total += w.w_collision * out_of_room_term(pg, node, self.human_margin)
            for other in sorted(list(pg.objects) + list(pg.humans), key=lambda n: n.node_id):
                if other.node_id != node_id:
                    total += w.w_collision * pair_collision_term(node, other, hoi_pairs, self.human_margin)

        if w.w_hoi:
            for edge in sorted(pg.hoi_partners(node_id)):
                total += w.w_hoi * hoi_term(pg, edge, self.priors)

        if isinstance(node, HumanPose):
            if w.w_likelihood_pose:
                total += w.w_likelihood_pose * self._pose_likelihood(pg, node)
        elif w.w_likelihood_obj:
            total += w.w_likelihood_obj * self._object_likelihood(pg, node)
        return total

    def delta(self, pg_old: ParseGraph, pg_new: ParseGraph, node_id: str) -> float:
        """Total energy change of a move that modified only `node_id`."""
        return self.node_energy(pg_new, node_id) - self.node_energy(pg_old, node_id)


def total_energy(pg: ParseGraph, obs: Observations, priors: HoiPriorSet,
                 weights: Optional[EnergyWeights] = None, assoc: Optional[Dict[str, int]] = None,
                 **options) -> EnergyBreakdown:
    """Weighted total energy with its per-term breakdown."""
    if assoc is not None and assoc != pg.assoc:
        pg = replace(pg, assoc=dict(assoc))
    return EnergyModel(obs, priors, weights, **options).breakdown(pg)
