"""Evaluation metrics against ground truth."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import UndefinedMetricsError
from ..scene.geometry import Rect2D, cuboid_iou, iou_2d, project_points, projected_hull
from ..scene.model import FLOOR_ID, WALL_IDS, Camera, Cuboid, HumanPose, Observations, ParseGraph

logger = logging.getLogger(__name__)

RECOVERY_IOU = 0.1


@dataclass
class Metrics:
    """Per-scene scores; IoUs and rates in percent, distances in meters, 2D errors in pixels.

    Fields are None when undefined for the scene (e.g. no humans).
    """

    iou_3d: Optional[float] = None
    iou_2d: Optional[float] = None
    depth_error: Optional[float] = None
    pose_error_3d: Optional[float] = None
    pose_error_2d: Optional[float] = None
    physical_violation: float = 0.0
    recovery_rate: Optional[float] = None
    miss_detection_rate: Optional[float] = None
    n_gt_objects: int = 0
    n_matched: int = 0

    def as_dict(self) -> Dict:
        return asdict(self)

    def __str__(self) -> str:
        def fmt(value, unit=""):
            return "n/a" if value is None else f"{value:.3f}{unit}"

        return (f"3D IoU {fmt(self.iou_3d, '%')}, 2D IoU {fmt(self.iou_2d, '%')}, "
                f"depth {fmt(self.depth_error, ' m')}, pose {fmt(self.pose_error_3d, ' m')}, "
                f"violation {fmt(self.physical_violation, ' m')}")


def match_objects(est: Sequence[Cuboid], gt: Sequence[Cuboid]) -> Dict[str, Tuple[str, float]]:
    """Class-aware greedy matching by 3D IoU; returns gt id -> (est id, iou)."""
    pairs = []
    for g in gt:
        for e in est:
            if e.class_label != g.class_label:
                continue
            iou = cuboid_iou(e, g)
            if iou > 0.0:
                pairs.append((-iou, g.node_id, e.node_id))
    pairs.sort()
    matches: Dict[str, Tuple[str, float]] = {}
    used = set()
    for neg_iou, g_id, e_id in pairs:
        if g_id in matches or e_id in used:
            continue
        matches[g_id] = (e_id, -neg_iou)
        used.add(e_id)
    return matches


def match_humans(est: Sequence[HumanPose], gt: Sequence[HumanPose]) -> Dict[str, str]:
    """Greedy nearest-hip matching; gt id -> est id."""
    pairs = sorted((float(np.linalg.norm(e.center - g.center)), g.node_id, e.node_id) for g in gt for e in est)
    matches: Dict[str, str] = {}
    used = set()
    for _, g_id, e_id in pairs:
        if g_id in matches or e_id in used:
            continue
        matches[g_id] = e_id
        used.add(e_id)
    return matches


def _box_2d(cam: Camera, c: Cuboid, image_size) -> Optional[Rect2D]:
    hull = projected_hull(cam, c, image_size)
    if hull is None or hull.is_empty:
        return None
    return hull.bounds()


def physical_violation(pg: ParseGraph) -> float:
    """Mean gap between each object's bottom and its supporter's top surface."""
    gaps = []
    for child_id, parent_id in pg.support_edges:
        child = pg.get_object(child_id)
        if child is None or parent_id in WALL_IDS:
            continue
        if parent_id == FLOOR_ID:
            gaps.append(abs(child.bottom_z - pg.floor_z))
            continue
        parent = pg.get_object(parent_id)
        if parent is not None:
            gaps.append(abs(child.bottom_z - parent.top_z))
    return float(np.mean(gaps)) if gaps else 0.0


def evaluate(pg_est: ParseGraph, pg_gt: ParseGraph, obs: Optional[Observations] = None) -> Metrics:
    """Score an estimate against ground truth, projecting through the ground-truth camera."""
    if not pg_gt.objects and not pg_gt.humans:
        raise UndefinedMetricsError("ground truth has no objects and no humans")
    cam = obs.camera if obs is not None else pg_gt.camera
    image_size = obs.image_size if obs is not None else (640, 480)
    metrics = Metrics(n_gt_objects=len(pg_gt.objects), physical_violation=physical_violation(pg_est))

    matches = match_objects(pg_est.objects, pg_gt.objects)
    metrics.n_matched = len(matches)
    if pg_gt.objects:
        ious_3d, ious_2d, depth_errors = [], [], []
        for g in pg_gt.objects:
            if g.node_id not in matches:
                ious_3d.append(0.0)
                ious_2d.append(0.0)
                continue
            e_id, iou = matches[g.node_id]
            e = pg_est.get_object(e_id)
            ious_3d.append(iou)
            g_box, e_box = _box_2d(cam, g, image_size), _box_2d(cam, e, image_size)
            ious_2d.append(iou_2d(g_box, e_box) if g_box is not None and e_box is not None else 0.0)
            depth_errors.append(abs(float(np.linalg.norm(e.center - cam.position))
                                    - float(np.linalg.norm(g.center - cam.position))))
        metrics.iou_3d = 100.0 * float(np.mean(ious_3d))
        metrics.iou_2d = 100.0 * float(np.mean(ious_2d))
        metrics.depth_error = float(np.mean(depth_errors)) if depth_errors else None

    human_matches = match_humans(pg_est.humans, pg_gt.humans)
    if human_matches:
        errors_3d, errors_2d = [], []
        for g_id, e_id in sorted(human_matches.items()):
            g, e = pg_gt.get_human(g_id), pg_est.get_human(e_id)
            errors_3d.append(float(np.mean(np.linalg.norm(e.joints - g.joints, axis=1))))
            uv_g, d_g = project_points(cam, g.joints)
            uv_e, d_e = project_points(cam, e.joints)
            front = (d_g > 0) & (d_e > 0)
            if front.any():
                errors_2d.append(float(np.mean(np.linalg.norm(uv_e[front] - uv_g[front], axis=1))))
        metrics.pose_error_3d = float(np.mean(errors_3d))
        metrics.pose_error_2d = float(np.mean(errors_2d)) if errors_2d else None

    interacting = sorted({o for _, o, _ in pg_gt.hoi_edges})
    if interacting:
        missing = [g for g in interacting
                   if g not in matches or matches[g][1] <= RECOVERY_IOU]
        metrics.miss_detection_rate = 100.0 * len(missing) / len(interacting)
        # interacting objects that no detected (non-synthesized) node explains
        undetected = [g for g in interacting if g not in pg_gt.assoc] if pg_gt.assoc else []
        if undetected:
            recovered = 0
            for g in undetected:
                if g in matches and matches[g][1] > RECOVERY_IOU:
                    est = pg_est.get_object(matches[g][0])
                    recovered += int(est is not None and est.synthesized)
            metrics.recovery_rate = 100.0 * recovered / len(undetected)
    return metrics


def _evaluate_row(args) -> Dict:
    name, est, gt, obs = args
    row = {"scene": name}
    row.update(evaluate(est, gt, obs).as_dict())
    return row


def evaluate_batch(items: Sequence[Tuple[str, ParseGraph, ParseGraph, Optional[Observations]]],
                   jobs: int = 1) -> pd.DataFrame:
    """One metrics row per (name, estimate, ground truth, observations) item."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_row, items))
    else:
        rows = [_evaluate_row(item) for item in items]
    return pd.DataFrame(rows, columns=["scene"] + list(Metrics.__dataclass_fields__))


def summarize(frame: pd.DataFrame) -> Dict[str, Optional[float]]:
    """Column means over scenes, skipping undefined values."""
    summary = {}
    for column in frame.columns:
        if column == "scene":
            continue
        values = pd.to_numeric(frame[column], errors="coerce").dropna()
        summary[column] = None if values.empty else float(values.mean())
    summary["n_scenes"] = int(len(frame))
    return summary
