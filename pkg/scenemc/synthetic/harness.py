"""Synthetic ground truth: rooms, supported objects, HOI-placed humans and rendered observations."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.errors import GenerationError, InvalidParameterError
from ..energy.terms import EnergyModel, EnergyWeights, collision_energy
from ..hoi.prior import DEFAULT_TOPDOWN_CLASS, HoiPriorSet, default_prior_set, sample_object_given_pose
from ..inference.init import CONTAINER_CLASSES, DEFAULT_CLASS_SIZES, DEFAULT_OBJECT_SIZE
from ..scene.geometry import MIN_DEPTH, intersection_volume, project_points, projected_hull, volume_outside
from ..scene.model import (
    ACTION_VOCABULARY,
    ANKLE_INDICES,
    FLOOR_ID,
    HOI_ACTIONS,
    JOINT_INDEX,
    LAYOUT_ID,
    Camera,
    Cuboid,
    DetectedBox,
    DetectedPose,
    HumanPose,
    Observations,
    ParseGraph,
    multi_hot,
    normalize_yaw,
    rotation_z,
)
from .templates import template_for, template_name

logger = logging.getLogger(__name__)

# Actions whose object is furniture the person is placed against.
ANCHORED_ACTIONS = ("sit", "sit-at", "use-laptop")
HAND_ACTIONS = ("hold", "read", "make-phone-call")

_YAW_STEPS = np.deg2rad(np.arange(-180, 180, 15))
_SCALES = (0.9, 1.0, 1.1)


class ObjectSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    class_label: str = Field(description="Object class")
    count: int = Field(default=1, ge=0)
    size_min: Optional[Tuple[float, float, float]] = Field(default=None, description="Smallest extents (w, d, h)")
    size_max: Optional[Tuple[float, float, float]] = Field(default=None, description="Largest extents (w, d, h)")
    on: Optional[str] = Field(default=None, description="Class of the supporting object; floor when empty")

    def size_range(self) -> Tuple[np.ndarray, np.ndarray]:
        base = DEFAULT_CLASS_SIZES.get(self.class_label, DEFAULT_OBJECT_SIZE)
        lo = np.array(self.size_min or base, dtype=float)
        hi = np.array(self.size_max or self.size_min or base, dtype=float)
        return lo, hi


class HumanSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    actions: List[str] = Field(default_factory=lambda: ["stand"])
    confidence: float = Field(default=0.9, ge=0.0, le=1.0, description="Confidence reported for active actions")

    @model_validator(mode="after")
    def _known_actions(self):
        unknown = [a for a in self.actions if a not in ACTION_VOCABULARY]
        if unknown:
            raise ValueError(f"unknown actions: {', '.join(unknown)}")
        return self


class NoiseModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    box_sigma_px: float = Field(default=0.0, ge=0.0, description="Detection box jitter")
    joint_sigma_px: float = Field(default=0.0, ge=0.0, description="2D joint jitter")
    miss_probability: float = Field(default=0.0, ge=0.0, le=1.0, description="Chance an object goes undetected")


class CameraRange(BaseModel):
    model_config = ConfigDict(extra="forbid")

    height: Tuple[float, float] = (1.3, 1.6)
    pitch: Tuple[float, float] = (0.25, 0.35)
    heading_jitter: float = Field(default=0.15, ge=0.0)
    focal: float = Field(default=600.0, gt=0.0)
    image_size: Tuple[int, int] = (640, 480)


class SceneSpec(BaseModel):
    """Recipe for a family of synthetic scenes."""

    model_config = ConfigDict(extra="forbid")

    room_size_min: Tuple[float, float, float] = (5.0, 5.0, 2.8)
    room_size_max: Tuple[float, float, float] = (6.0, 6.0, 3.0)
    objects: List[ObjectSpec] = Field(default_factory=list)
    humans: List[HumanSpec] = Field(default_factory=list)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    camera: CameraRange = Field(default_factory=CameraRange)
    seed: int = 0
    max_retries: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _ranges(self):
        for lo, hi in zip(self.room_size_min, self.room_size_max):
            if not 0 < lo <= hi:
                raise ValueError(f"room size range [{lo}, {hi}] is empty or nonpositive")
        for lo, hi in (self.camera.height, self.camera.pitch):
            if lo > hi:
                raise ValueError(f"camera range [{lo}, {hi}] is empty")
        return self


@dataclass(frozen=True, eq=False)
class AugmentedHuman:
    """Imagined human: action, template, translation, yaw, scale and the resulting skeleton."""

    action: str
    template: np.ndarray
    translation: np.ndarray
    yaw: float
    scale: float
    skeleton: np.ndarray

    @classmethod
    def compose(cls, action: str, template, translation, yaw: float, scale: float) -> "AugmentedHuman":
        # row-vector joints: rotate, then scale, then translate
        template = np.asarray(template, dtype=float)
        skeleton = (template @ rotation_z(yaw).T) * scale + np.asarray(translation, dtype=float)
        return cls(action, template, np.asarray(translation, dtype=float), float(yaw), float(scale), skeleton)

    def to_pose(self, actions: Sequence[str], confidence: float, node_id: str) -> HumanPose:
        conf = tuple(confidence if name in actions else 0.0 for name in ACTION_VOCABULARY)
        return HumanPose(center=self.translation, scale=self.scale, rel_joints=self.template, yaw=self.yaw,
                         actions=multi_hot(actions), action_confidence=conf, node_id=node_id)


class _Retry(Exception):
    pass


def _in_view(cam: Camera, points: np.ndarray, image_size: Tuple[int, int], margin: float = 5.0) -> bool:
    uv, depth = project_points(cam, points)
    if np.any(depth <= 0.3):
        return False
    w, h = image_size
    return bool(np.all((uv[:, 0] >= margin) & (uv[:, 0] <= w - margin) & (uv[:, 1] >= margin) & (uv[:, 1] <= h - margin)))


def _sample_camera(spec: SceneSpec, layout: Cuboid, rng: np.random.Generator) -> Camera:
    depth, width = layout.size[0], layout.size[1]
    position = np.array([
        layout.center[0] - 0.5 * depth + 0.3,
        layout.center[1] + rng.uniform(-0.2, 0.2) * width,
        layout.bottom_z + rng.uniform(*spec.camera.height),
    ])
    heading = layout.yaw + rng.uniform(-spec.camera.heading_jitter, spec.camera.heading_jitter)
    w, h = spec.camera.image_size
    return Camera.looking_at(position, heading, pitch=rng.uniform(*spec.camera.pitch), focal=spec.camera.focal,
                             principal_point=(0.5 * w, 0.5 * h))


class _Builder:
    """One generation attempt; raises _Retry when a placement fails."""

    def __init__(self, spec: SceneSpec, priors: HoiPriorSet, rng: np.random.Generator):
        self.spec = spec
        self.priors = priors
        self.rng = rng
        lo, hi = np.array(spec.room_size_min), np.array(spec.room_size_max)
        size = rng.uniform(lo, hi)
        self.layout = Cuboid(center=(0.0, 0.0, 0.5 * size[2]), size=size, class_label="layout", node_id=LAYOUT_ID)
        self.camera = _sample_camera(spec, self.layout, rng)
        self.objects: List[Cuboid] = []
        self.humans: List[HumanPose] = []
        self.support: List[Tuple[str, str]] = []
        self.hoi: List[Tuple[str, str, str]] = []

    def graph(self) -> ParseGraph:
        return ParseGraph(layout=self.layout, camera=self.camera, objects=tuple(self.objects),
                          humans=tuple(self.humans), support_edges=tuple(self.support), hoi_edges=tuple(self.hoi))

    def _free(self, box: Cuboid, ignore: Sequence[str] = ()) -> bool:
        if volume_outside(box, self.layout) > 1e-12:
            return False
        for other in self.objects:
            if other.node_id in ignore or box.is_container or other.is_container:
                continue
            if intersection_volume(box, other) > 0.0:
                return False
        return True

    def place_object(self, spec: ObjectSpec, index: int, tries: int = 200) -> Cuboid:
        lo, hi = spec.size_range()
        node_id = f"obj_{index}"
        container = spec.class_label in CONTAINER_CLASSES
        supporters = [o for o in self.objects if o.class_label == spec.on] if spec.on else []
        if spec.on and not supporters:
            raise GenerationError(f"'{spec.class_label}' must rest on a '{spec.on}' but none is placed before it")
        for _ in range(tries):
            size = self.rng.uniform(lo, hi)
            if spec.on:
                parent = supporters[self.rng.integers(len(supporters))]
                slack = 0.5 * (parent.size[:2] - size[:2])
                if np.any(slack < 0):
                    continue
                local = np.array([self.rng.uniform(-slack[0], slack[0]), self.rng.uniform(-slack[1], slack[1]), 0.0])
                center = parent.center + parent.rotation @ local
                center[2] = parent.top_z + 0.5 * size[2]
                yaw, supporter = parent.yaw, parent.node_id
            else:
                yaw = self.layout.yaw + 0.5 * math.pi * self.rng.integers(4)
                reach = 0.5 * math.hypot(size[0], size[1])
                half = 0.5 * self.layout.size[:2] - reach
                if np.any(half <= 0):
                    continue
                xy = self.layout.center[:2] + self.rng.uniform(-half, half)
                center = np.array([xy[0], xy[1], self.layout.bottom_z + 0.5 * size[2]])
                supporter = FLOOR_ID
            box = Cuboid(center=center, size=size, yaw=yaw, class_label=spec.class_label,
                         is_container=container, node_id=node_id)
            if not _in_view(self.camera, box.corners(), self.spec.camera.image_size):
                continue
            if not self._free(box, ignore=(supporter,)):
                continue
            self.objects.append(box)
            self.support.append((node_id, supporter))
            return box
        raise _Retry(f"could not place {spec.class_label}")

    def _human_energy(self, model: EnergyModel, human: HumanPose, edges: List[Tuple[str, str, str]]) -> float:
        pg = replace(self.graph(), humans=tuple(self.humans) + (human,),
                     support_edges=tuple(self.support) + ((human.node_id, FLOOR_ID),),
                     hoi_edges=tuple(self.hoi) + tuple(edges))
        return model.node_energy(pg, human.node_id)

    def _feet_on_floor(self, template: np.ndarray, xy, yaw: float, scale: float) -> np.ndarray:
        feet = min(template[i, 2] for i in ANKLE_INDICES)
        return np.array([xy[0], xy[1], self.layout.bottom_z - scale * feet])

    def place_human(self, spec: HumanSpec, index: int, used: Dict[str, set]) -> HumanPose:
        node_id = f"human_{index}"
        template = template_for(spec.actions)
        anchored = [a for a in spec.actions if a in ANCHORED_ACTIONS]
        edges: List[Tuple[str, str, str]] = []
        for action in anchored:
            prior = self.priors.get(action)
            candidates = [o for o in self.objects
                          if o.class_label in prior.object_classes and o.node_id not in used.setdefault(action, set())]
            if not candidates:
                raise GenerationError(f"action '{action}' needs one of {sorted(prior.object_classes)} in the scene")
            target = candidates[self.rng.integers(len(candidates))]
            used[action].add(target.node_id)
            edges.append((node_id, target.node_id, action))

        model = EnergyModel(Observations(camera=self.camera), self.priors,
                            EnergyWeights(w_likelihood_obj=0.0, w_likelihood_pose=0.0))

        def build(x, y, yaw, scale):
            aug = AugmentedHuman.compose(template_name(spec.actions), template,
                                         self._feet_on_floor(template, (x, y), yaw, scale), yaw, scale)
            return aug.to_pose(spec.actions, spec.confidence, node_id)

        if edges:
            human = self._optimize(edges, template, build, model)
        else:
            human = self._random_human(build, model)

        if not _in_view(self.camera, human.joints, self.spec.camera.image_size):
            raise _Retry(f"{node_id} left the camera view")
        self.humans.append(human)
        self.support.append((node_id, FLOOR_ID))
        self.hoi.extend(edges)
        if collision_energy(self.graph()) > 1e-12:
            raise _Retry(f"{node_id} collides with the scene")

        for action in (a for a in spec.actions if a in HAND_ACTIONS):
            self._augment_held_object(human, action)
        return human

    def _optimize(self, edges, template, build, model) -> HumanPose:
        """Grid over yaw and scale at the analytic prior position, then local refinement."""
        _, object_id, action = edges[0]
        prior = self.priors.get(action)
        obj = next(o for o in self.objects if o.node_id == object_id)
        key = prior.key_joint

        def key_rel(scale):
            if key == "wrist_midpoint":
                rel = 0.5 * (template[JOINT_INDEX["l_wrist"]] + template[JOINT_INDEX["r_wrist"]])
            else:
                rel = template[JOINT_INDEX[key]]
            return scale * rel

        def energy(params):
            return self._human_energy(model, build(*params), edges)

        coarse = []
        for yaw in _YAW_STEPS:
            for scale in _SCALES:
                hip_xy = obj.center[:2] - (rotation_z(yaw) @ (prior.mean + key_rel(scale)))[:2]
                params = (hip_xy[0], hip_xy[1], float(yaw), scale)
                coarse.append((energy(params), params))
        coarse.sort(key=lambda item: item[0])

        best_e, best = coarse[0]
        for _, (x0, y0, yaw, scale) in coarse[:3]:
            for dx in np.arange(-0.3, 0.31, 0.1):
                for dy in np.arange(-0.3, 0.31, 0.1):
                    params = (x0 + dx, y0 + dy, yaw, scale)
                    e = energy(params)
                    if e < best_e:
                        best_e, best = e, params

        steps = [0.05, 0.05, math.radians(5.0), 0.02]
        for _ in range(6):
            improved = False
            for i, step in enumerate(steps):
                for sign in (1.0, -1.0):
                    params = list(best)
                    params[i] += sign * step
                    if i == 3 and not _SCALES[0] <= params[3] <= _SCALES[-1]:
                        continue
                    e = energy(tuple(params))
                    if e < best_e:
                        best_e, best, improved = e, tuple(params), True
            if not improved:
                steps = [s * 0.5 for s in steps]
        return build(*best)

    def _random_human(self, build, model, tries: int = 200) -> HumanPose:
        half = 0.5 * self.layout.size[:2] - 0.6
        for _ in range(tries):
            xy = self.layout.center[:2] + self.rng.uniform(-half, half)
            # face roughly toward the camera
            yaw = normalize_yaw(self.camera.heading + math.pi + self.rng.uniform(-0.8, 0.8))
            human = build(xy[0], xy[1], yaw, 1.0)
            if self._human_energy(model, human, []) <= 1e-12 and \
                    _in_view(self.camera, human.joints, self.spec.camera.image_size):
                return human
        raise _Retry("could not place a free-standing human")

    def _augment_held_object(self, human: HumanPose, action: str):
        prior = self.priors.get(action)
        label = DEFAULT_TOPDOWN_CLASS.get(action)
        if label not in prior.object_classes:
            label = sorted(prior.object_classes)[0]
        node_id = f"obj_{len(self.objects)}"
        box = Cuboid(center=sample_object_given_pose(prior, human), size=DEFAULT_CLASS_SIZES.get(label, DEFAULT_OBJECT_SIZE),
                     yaw=human.yaw, class_label=label, node_id=node_id)
        if not self._free(box) or not _in_view(self.camera, box.corners(), self.spec.camera.image_size):
            raise _Retry(f"held {label} of {human.node_id} does not fit")
        self.objects.append(box)
        self.support.append((node_id, human.node_id))
        self.hoi.append((human.node_id, node_id, action))


def _check_feasible(spec: SceneSpec):
    room = np.array(spec.room_size_max)
    for obj in spec.objects:
        lo, _ = obj.size_range()
        if max(lo[0], lo[1]) > min(room[0], room[1]) or lo[2] > room[2]:
            raise GenerationError(f"'{obj.class_label}' of size {lo.tolist()} cannot fit a room of at most {room.tolist()}")


def _build_scene(spec: SceneSpec, priors: HoiPriorSet, rng: np.random.Generator) -> ParseGraph:
    builder = _Builder(spec, priors, rng)
    index = 0
    floor_first = sorted(spec.objects, key=lambda o: o.on is not None)
    for obj_spec in floor_first:
        for _ in range(obj_spec.count):
            builder.place_object(obj_spec, index)
            index += 1
    used: Dict[str, set] = {}
    for j, human_spec in enumerate(spec.humans):
        builder.place_human(human_spec, j, used)
    return builder.graph()


def render_observations(pg: ParseGraph, noise: NoiseModel, rng: np.random.Generator,
                        image_size: Tuple[int, int] = (640, 480)) -> Tuple[Observations, Dict[str, int]]:
    """Project the ground truth through its camera and apply the noise model.

    Returns the observations and the node-to-detection association.
    """
    cam = pg.camera
    boxes: List[DetectedBox] = []
    assoc: Dict[str, int] = {}
    for obj in pg.objects:
        missed = rng.random() < noise.miss_probability
        jitter = rng.normal(0.0, noise.box_sigma_px, 4) if noise.box_sigma_px > 0 else np.zeros(4)
        hull = projected_hull(cam, obj, image_size)
        if missed or hull is None or hull.is_empty:
            continue
        x0, y0, x1, y1 = (np.array(hull.bounds().as_box()) + jitter).tolist()
        assoc[obj.node_id] = len(boxes)
        boxes.append(DetectedBox(class_label=obj.class_label, box=(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))))

    poses: List[DetectedPose] = []
    w, h = image_size
    for human in pg.humans:
        uv, depth = project_points(cam, human.joints)
        if noise.joint_sigma_px > 0:
            uv = uv + rng.normal(0.0, noise.joint_sigma_px, uv.shape)
        visible = tuple(bool(d > MIN_DEPTH and 0 <= u <= w and 0 <= v <= h) for (u, v), d in zip(uv, depth))
        assoc[human.node_id] = len(poses)
        poses.append(DetectedPose(joints_2d=uv, visible=visible, actions=human.actions,
                                  confidences=human.action_confidence,
                                  local_joints=human.joints - human.center))
    obs = Observations(camera=cam, det_boxes=tuple(boxes), det_poses=tuple(poses), image_size=image_size,
                       layout_hint=pg.layout)
    return obs, assoc


def generate_scene(spec: SceneSpec, priors: Optional[HoiPriorSet] = None,
                   rng: Optional[np.random.Generator] = None) -> Tuple[ParseGraph, Observations]:
    """Sample a ground-truth parse graph and its rendered observations."""
    priors = priors or default_prior_set()
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    _check_feasible(spec)
    last = None
    for attempt in range(spec.max_retries):
        try:
            pg = _build_scene(spec, priors, rng)
            break
        except _Retry as e:
            last = e
            logger.debug(f"Generation attempt {attempt + 1} failed: {e}")
    else:
        raise GenerationError(f"no feasible scene after {spec.max_retries} attempts (last failure: {last})")

    obs, assoc = render_observations(pg, spec.noise, rng, tuple(spec.camera.image_size))
    pg = replace(pg, assoc=assoc)
    logger.info(f"Generated scene with {len(pg.objects)} objects and {len(pg.humans)} humans")
    return pg, obs


class NoiseLevels(BaseModel):
    """Standard deviations used by perturb."""

    model_config = ConfigDict(extra="forbid")

    translation: float = Field(default=0.0, ge=0.0, description="Isotropic object center noise, meters")
    depth: float = Field(default=0.0, ge=0.0, description="Object noise along the camera ray, meters")
    yaw: float = Field(default=0.0, ge=0.0, description="Object yaw noise, radians")
    size: float = Field(default=0.0, ge=0.0, description="Relative (log) size noise")
    human_translation: float = Field(default=0.0, ge=0.0, description="Human hip noise, meters")
    human_scale: float = Field(default=0.0, ge=0.0, description="Relative (log) human scale noise")
    floor: float = Field(default=0.0, ge=0.0, description="Floor height noise, meters (layout fixed when 0)")


def perturb(pg: ParseGraph, noise: NoiseLevels, rng: np.random.Generator) -> ParseGraph:
    """Degrade a parse graph with zero-mean noise; terms with zero sigma are left untouched."""
    objects = []
    for obj in pg.objects:
        center = obj.center.copy()
        if noise.translation > 0:
            center += rng.normal(0.0, noise.translation, 3)
        if noise.depth > 0:
            ray = obj.center - pg.camera.position
            center += rng.normal(0.0, noise.depth) * ray / max(np.linalg.norm(ray), 1e-12)
        yaw = obj.yaw + rng.normal(0.0, noise.yaw) if noise.yaw > 0 else obj.yaw
        size = obj.size * np.exp(rng.normal(0.0, noise.size, 3)) if noise.size > 0 else obj.size
        objects.append(replace(obj, center=center, yaw=yaw, size=size))

    humans = []
    for human in pg.humans:
        center = human.center + rng.normal(0.0, noise.human_translation, 3) if noise.human_translation > 0 \
            else human.center
        scale = human.scale * math.exp(rng.normal(0.0, noise.human_scale)) if noise.human_scale > 0 else human.scale
        humans.append(replace(human, center=center, scale=scale))

    layout = pg.layout
    if noise.floor > 0:
        shift = rng.normal(0.0, noise.floor)
        layout = replace(layout, size=layout.size - np.array([0.0, 0.0, shift]),
                         center=layout.center + np.array([0.0, 0.0, 0.5 * shift]))
    return replace(pg, layout=layout, objects=tuple(objects), humans=tuple(humans))


def scene_seeds(seed: int, n: int) -> List[int]:
    """Independent per-scene seeds derived from a base seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def hoi_actions_of(spec: SceneSpec) -> List[str]:
    return sorted({a for h in spec.humans for a in h.actions if a in HOI_ACTIONS})


def validate_spec(spec: SceneSpec, priors: HoiPriorSet):
    for action in hoi_actions_of(spec):
        if action not in priors:
            raise InvalidParameterError(f"scene spec uses '{action}' but no prior is loaded for it")


def drop_detection(pg: ParseGraph, obs: Observations, node_id: str) -> Tuple[ParseGraph, Observations]:
    """Remove one object's detection, as if the detector had missed it."""
    if node_id not in pg.assoc or pg.get_object(node_id) is None:
        raise InvalidParameterError(f"'{node_id}' is not a detected object")
    index = pg.assoc[node_id]
    boxes = obs.det_boxes[:index] + obs.det_boxes[index + 1:]
    assoc = {}
    for key, value in pg.assoc.items():
        if key == node_id:
            continue
        if pg.get_object(key) is not None and value > index:
            value -= 1
        assoc[key] = value
    return replace(pg, assoc=assoc), replace(obs, det_boxes=boxes)
