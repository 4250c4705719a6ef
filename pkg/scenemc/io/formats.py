"""JSON file formats: scene/v1, obs/v1, hoi-prior/v1 and metrics/v1.

Every file carries a "$schema" tag. Floats are written with 9 significant
digits so output bytes are reproducible.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..core.errors import InvalidParameterError, SchemaError
from ..hoi.prior import HoiPrior, HoiPriorSet, fit_prior
from ..scene.model import (
    ACTION_VOCABULARY,
    NUM_JOINTS,
    Camera,
    Cuboid,
    DetectedBox,
    DetectedPose,
    HumanPose,
    Observations,
    ParseGraph,
    multi_hot,
)
from ..synthetic.harness import SceneSpec

logger = logging.getLogger(__name__)

SCENE_SCHEMA = "scene/v1"
OBS_SCHEMA = "obs/v1"
PRIOR_SCHEMA = "hoi-prior/v1"
METRICS_SCHEMA = "metrics/v1"
MANIFEST_SCHEMA = "synth-manifest/v1"

Vec3 = Tuple[float, float, float]


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class CuboidRecord(_Record):
    id: str = ""
    class_label: str = Field(default="object", alias="class")
    center: Vec3
    size: Vec3
    yaw: float = 0.0
    is_container: bool = False
    synthesized: bool = False


class CameraRecord(_Record):
    intrinsics: Tuple[Vec3, Vec3, Vec3]
    rotation: Tuple[Vec3, Vec3, Vec3]
    position: Vec3


class HumanRecord(_Record):
    id: str
    center: Vec3
    scale: float
    yaw: float = 0.0
    rel_joints: List[Vec3]
    actions: List[str] = Field(default_factory=list)
    confidences: Dict[str, float] = Field(default_factory=dict)


class SceneRecord(_Record):
    schema_tag: str = Field(alias="$schema")
    layout: CuboidRecord
    camera: CameraRecord
    objects: List[CuboidRecord] = Field(default_factory=list)
    humans: List[HumanRecord] = Field(default_factory=list)
    support_edges: List[Tuple[str, str]] = Field(default_factory=list)
    hoi_edges: List[Tuple[str, str, str]] = Field(default_factory=list)
    assoc: Dict[str, int] = Field(default_factory=dict)


class BoxRecord(_Record):
    class_label: str = Field(alias="class")
    box: Tuple[float, float, float, float]
    score: float = 1.0


class PoseRecord(_Record):
    joints_2d: List[Tuple[float, float]]
    visible: List[bool]
    actions: List[str] = Field(default_factory=list)
    confidences: Dict[str, float] = Field(default_factory=dict)
    local_joints: Optional[List[Vec3]] = None


class ObservationsRecord(_Record):
    schema_tag: str = Field(alias="$schema")
    camera: CameraRecord
    image_size: Tuple[int, int] = (640, 480)
    layout_hint: Optional[CuboidRecord] = None
    det_boxes: List[BoxRecord] = Field(default_factory=list)
    det_poses: List[PoseRecord] = Field(default_factory=list)


class PriorRecord(_Record):
    action: str
    object_classes: List[str]
    key_joint: str
    mean: Vec3
    covariance: Tuple[Vec3, Vec3, Vec3]


class PriorSetRecord(_Record):
    schema_tag: str = Field(alias="$schema")
    priors: List[PriorRecord]


# -- number formatting ------------------------------------------------------

def _num(x: float) -> float:
    return float(f"{float(x):.9g}")


def _vec(values) -> List:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return [_num(v) for v in arr]
    return [_vec(row) for row in arr]


def _dumps(data: Dict) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def _read_json(path: Path) -> Any:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise SchemaError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from e


def _parse(record_cls, data: Any, expected: str, source: str):
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: expected a JSON object")
    tag = data.get("$schema")
    if tag != expected:
        raise SchemaError(f"{source}: expected $schema '{expected}', found '{tag}'")
    try:
        return record_cls.model_validate(data)
    except ValidationError as e:
        raise SchemaError(f"{source}: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}") from e


def _orthonormalize(rotation) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=float))
    return u @ vt


def _confidence_map(values) -> Dict[str, float]:
    return {name: _num(c) for name, c in zip(ACTION_VOCABULARY, values) if c}


def _confidence_tuple(mapping: Dict[str, float]) -> Tuple[float, ...]:
    unknown = set(mapping) - set(ACTION_VOCABULARY)
    if unknown:
        raise SchemaError(f"unknown actions in confidences: {sorted(unknown)}")
    return tuple(float(mapping.get(name, 0.0)) for name in ACTION_VOCABULARY)


def _actions(names: List[str]) -> Tuple[int, ...]:
    try:
        return multi_hot(names)
    except InvalidParameterError as e:
        raise SchemaError(str(e)) from e


# -- scene ------------------------------------------------------------------

def _cuboid_dict(c: Cuboid) -> Dict:
    return {"id": c.node_id, "class": c.class_label, "center": _vec(c.center), "size": _vec(c.size),
            "yaw": _num(c.yaw), "is_container": c.is_container, "synthesized": c.synthesized}


def _cuboid(record: CuboidRecord) -> Cuboid:
    return Cuboid(center=record.center, size=record.size, yaw=record.yaw, class_label=record.class_label,
                  is_container=record.is_container, node_id=record.id, synthesized=record.synthesized)


def _camera_dict(cam: Camera) -> Dict:
    return {"intrinsics": _vec(cam.intrinsics), "rotation": _vec(cam.rotation), "position": _vec(cam.position)}


def _camera(record: CameraRecord) -> Camera:
    return Camera(intrinsics=record.intrinsics, rotation=_orthonormalize(record.rotation), position=record.position)


def scene_to_dict(pg: ParseGraph) -> Dict:
    return {
        "$schema": SCENE_SCHEMA,
        "layout": _cuboid_dict(pg.layout),
        "camera": _camera_dict(pg.camera),
        "objects": [_cuboid_dict(o) for o in pg.objects],
        "humans": [{
            "id": h.node_id, "center": _vec(h.center), "scale": _num(h.scale), "yaw": _num(h.yaw),
            "rel_joints": _vec(h.rel_joints), "actions": h.active_actions(),
            "confidences": _confidence_map(h.action_confidence),
        } for h in pg.humans],
        "support_edges": [list(e) for e in pg.support_edges],
        "hoi_edges": [list(e) for e in pg.hoi_edges],
        "assoc": dict(pg.assoc),
    }


def scene_from_dict(data: Any, source: str = "scene") -> ParseGraph:
    record = _parse(SceneRecord, data, SCENE_SCHEMA, source)
    try:
        humans = []
        for h in record.humans:
            if len(h.rel_joints) != NUM_JOINTS:
                raise SchemaError(f"{source}: human '{h.id}' has {len(h.rel_joints)} joints, expected {NUM_JOINTS}")
            humans.append(HumanPose(center=h.center, scale=h.scale, rel_joints=h.rel_joints, yaw=h.yaw,
                                    actions=_actions(h.actions), action_confidence=_confidence_tuple(h.confidences),
                                    node_id=h.id))
        return ParseGraph(
            layout=_cuboid(record.layout), camera=_camera(record.camera),
            objects=tuple(_cuboid(o) for o in record.objects), humans=tuple(humans),
            support_edges=tuple(tuple(e) for e in record.support_edges),
            hoi_edges=tuple(tuple(e) for e in record.hoi_edges), assoc=dict(record.assoc),
        )
    except InvalidParameterError as e:
        raise SchemaError(f"{source}: {e}") from e


def save_scene(pg: ParseGraph, path: Path) -> None:
    Path(path).write_text(_dumps(scene_to_dict(pg)))


def load_scene(path: Path) -> ParseGraph:
    return scene_from_dict(_read_json(path), str(path))


# -- observations -------------------------------------------------------------

def observations_to_dict(obs: Observations) -> Dict:
    return {
        "$schema": OBS_SCHEMA,
        "camera": _camera_dict(obs.camera),
        "image_size": list(obs.image_size),
        "layout_hint": None if obs.layout_hint is None else _cuboid_dict(obs.layout_hint),
        "det_boxes": [{"class": d.class_label, "box": _vec(d.box), "score": _num(d.score)} for d in obs.det_boxes],
        "det_poses": [{
            "joints_2d": _vec(p.joints_2d), "visible": list(p.visible), "actions": p.active_actions(),
            "confidences": _confidence_map(p.confidences),
            "local_joints": None if p.local_joints is None else _vec(p.local_joints),
        } for p in obs.det_poses],
    }


def observations_from_dict(data: Any, source: str = "observations") -> Observations:
    record = _parse(ObservationsRecord, data, OBS_SCHEMA, source)
    try:
        poses = []
        for i, p in enumerate(record.det_poses):
            if len(p.joints_2d) != NUM_JOINTS or len(p.visible) != NUM_JOINTS:
                raise SchemaError(f"{source}: pose {i} must list {NUM_JOINTS} joints and visibility flags")
            poses.append(DetectedPose(joints_2d=p.joints_2d, visible=tuple(p.visible), actions=_actions(p.actions),
                                      confidences=_confidence_tuple(p.confidences), local_joints=p.local_joints))
        return Observations(
            camera=_camera(record.camera),
            det_boxes=tuple(DetectedBox(b.class_label, tuple(b.box), b.score) for b in record.det_boxes),
            det_poses=tuple(poses), image_size=tuple(record.image_size),
            layout_hint=None if record.layout_hint is None else _cuboid(record.layout_hint),
        )
    except InvalidParameterError as e:
        raise SchemaError(f"{source}: {e}") from e


def save_observations(obs: Observations, path: Path) -> None:
    Path(path).write_text(_dumps(observations_to_dict(obs)))


def load_observations(path: Path) -> Observations:
    return observations_from_dict(_read_json(path), str(path))


# -- priors -------------------------------------------------------------------

def prior_set_to_dict(priors: HoiPriorSet) -> Dict:
    return {
        "$schema": PRIOR_SCHEMA,
        "priors": [{
            "action": p.action, "object_classes": sorted(p.object_classes), "key_joint": p.key_joint,
            "mean": _vec(p.mean), "covariance": _vec(p.covariance),
        } for p in (priors.priors[a] for a in priors.actions)],
    }


def prior_set_from_dict(data: Any, source: str = "priors") -> HoiPriorSet:
    record = _parse(PriorSetRecord, data, PRIOR_SCHEMA, source)
    priors: Dict[str, HoiPrior] = {}
    for r in record.priors:
        if r.action in priors:
            raise SchemaError(f"{source}: duplicate prior for action '{r.action}'")
        try:
            priors[r.action] = HoiPrior(action=r.action, object_classes=frozenset(r.object_classes),
                                        key_joint=r.key_joint, mean=r.mean, covariance=r.covariance)
        except InvalidParameterError as e:
            raise SchemaError(f"{source}: {e}") from e
    return HoiPriorSet(priors=priors)


def save_prior_set(priors: HoiPriorSet, path: Path) -> None:
    Path(path).write_text(_dumps(prior_set_to_dict(priors)))


def load_prior_set(path: Path) -> HoiPriorSet:
    return prior_set_from_dict(_read_json(path), str(path))


def load_offset_samples(path: Path) -> Dict[str, np.ndarray]:
    """Read (action, offset) samples from CSV (action,dx,dy,dz) or JSON records."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise SchemaError(f"{path}: {e}") from e
        missing = {"action", "dx", "dy", "dz"} - set(frame.columns)
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        try:
            frame[["dx", "dy", "dz"]] = frame[["dx", "dy", "dz"]].astype(float)
        except ValueError as e:
            raise SchemaError(f"{path}: non-numeric offset ({e})") from e
        return {action: group[["dx", "dy", "dz"]].to_numpy() for action, group in frame.groupby("action", sort=True)}

    data = _read_json(path)
    if isinstance(data, dict):
        data = data.get("samples")
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a list of {{action, offset}} records")
    grouped: Dict[str, List[List[float]]] = {}
    for i, row in enumerate(data):
        try:
            action, offset = row["action"], [float(v) for v in row["offset"]]
        except (TypeError, KeyError, ValueError) as e:
            raise SchemaError(f"{path}: record {i} is not an {{action, offset[3]}} record") from e
        if len(offset) != 3:
            raise SchemaError(f"{path}: record {i} offset has {len(offset)} components")
        grouped.setdefault(action, []).append(offset)
    return {action: np.array(rows) for action, rows in sorted(grouped.items())}


def fit_prior_set(samples: Dict[str, np.ndarray]) -> HoiPriorSet:
    return HoiPriorSet(priors={action: fit_prior(action, rows) for action, rows in samples.items()})


# -- synthesis ----------------------------------------------------------------

def load_scene_spec(path: Path) -> SceneSpec:
    data = _read_json(path)
    try:
        return SceneSpec.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        raise SchemaError(f"{path}: {'.'.join(str(p) for p in err['loc'])}: {err['msg']}") from e


def write_manifest(entries: List[Dict[str, Any]], seed: int, path: Path) -> None:
    """Index of a synth run: one entry per scene with its derived seed and files."""
    Path(path).write_text(_dumps({"$schema": MANIFEST_SCHEMA, "seed": seed, "scenes": entries}))


# -- metrics ------------------------------------------------------------------

def _clean(value):
    if isinstance(value, float):
        return None if np.isnan(value) else _num(value)
    if isinstance(value, (np.floating,)):
        return None if np.isnan(value) else _num(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def metrics_to_json(frame: pd.DataFrame, summary: Dict[str, Any]) -> str:
    scenes = [{k: _clean(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]
    return _dumps({"$schema": METRICS_SCHEMA, "scenes": scenes, "summary": {k: _clean(v) for k, v in summary.items()}})


__all__ = [
    "load_scene", "save_scene", "load_observations", "save_observations",
    "load_prior_set", "save_prior_set", "load_offset_samples", "fit_prior_set", "metrics_to_json",
    "load_scene_spec", "write_manifest",
]
