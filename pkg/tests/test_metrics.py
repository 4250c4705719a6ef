"""Scoring estimates against ground truth."""

from dataclasses import replace

import numpy as np
import pytest

from conftest import make_box, make_human
from scenemc.core.errors import UndefinedMetricsError
from scenemc.scene.model import FLOOR_ID, ParseGraph
from scenemc.synthetic.metrics import (
    evaluate,
    evaluate_batch,
    match_humans,
    match_objects,
    physical_violation,
    summarize,
)


def single_box_graph(room, camera, center=(1.0, 0.0, 0.5), label="box"):
    box = make_box("obj_0", center, label=label)
    return ParseGraph(layout=room, camera=camera, objects=(box,), support_edges=(("obj_0", FLOOR_ID),))


@pytest.fixture
def holding_gt(room, camera):
    """A human holding a bottle the detector never saw, next to a detected chair."""
    human = make_human(template="reach", actions=("hold",), xy=(1.0, 0.5))
    chair = make_box("obj_0", (1.0, -1.0, 0.45), (0.5, 0.5, 0.9), label="chair")
    bottle = make_box("obj_1", human.joint("r_wrist"), (0.08, 0.08, 0.25), label="bottle")
    return ParseGraph(layout=room, camera=camera, objects=(chair, bottle), humans=(human,),
                      support_edges=(("obj_0", FLOOR_ID), ("obj_1", "human_0"), ("human_0", FLOOR_ID)),
                      hoi_edges=(("human_0", "obj_1", "hold"),), assoc={"obj_0": 0, "human_0": 0})


class TestEvaluate:
    def test_perfect_estimate(self, table_scene):
        metrics = evaluate(table_scene, table_scene)
        assert metrics.iou_3d == pytest.approx(100.0)
        assert metrics.iou_2d == pytest.approx(100.0)
        assert metrics.depth_error == pytest.approx(0.0)
        assert metrics.physical_violation == pytest.approx(0.0)
        assert metrics.n_matched == metrics.n_gt_objects == 2
        assert metrics.pose_error_3d is None

    def test_half_extent_shift(self, room, camera):
        gt = single_box_graph(room, camera)
        est = single_box_graph(room, camera, center=(1.5, 0.0, 0.5))
        metrics = evaluate(est, gt)
        assert metrics.iou_3d == pytest.approx(100.0 / 3.0)
        assert metrics.depth_error == pytest.approx(
            np.linalg.norm(np.array([1.5, 0.0, 0.5]) - camera.position)
            - np.linalg.norm(np.array([1.0, 0.0, 0.5]) - camera.position))

    def test_class_mismatch_scores_zero(self, room, camera):
        gt = single_box_graph(room, camera, label="chair")
        est = single_box_graph(room, camera, label="table")
        metrics = evaluate(est, gt)
        assert metrics.iou_3d == 0.0
        assert metrics.n_matched == 0
        assert metrics.depth_error is None

    def test_empty_ground_truth(self, empty_graph, table_scene):
        with pytest.raises(UndefinedMetricsError):
            evaluate(table_scene, empty_graph)

    def test_pose_error(self, room, camera):
        gt = ParseGraph(layout=room, camera=camera, humans=(make_human(),))
        est = ParseGraph(layout=room, camera=camera, humans=(make_human(xy=(0.1, 0.0)),))
        metrics = evaluate(est, gt)
        assert metrics.pose_error_3d == pytest.approx(0.1)
        assert metrics.pose_error_2d > 0.0
        assert metrics.iou_3d is None

    def test_recovered_by_top_down_sampling(self, holding_gt):
        bottle = holding_gt.get_object("obj_1")
        est = replace(holding_gt, objects=(holding_gt.objects[0], replace(bottle, node_id="topdown_0", synthesized=True)))
        metrics = evaluate(est, holding_gt)
        assert metrics.recovery_rate == pytest.approx(100.0)
        assert metrics.miss_detection_rate == pytest.approx(0.0)

    def test_not_recovered_by_detected_object(self, holding_gt):
        metrics = evaluate(holding_gt, holding_gt)
        assert metrics.recovery_rate == pytest.approx(0.0)

    def test_missing_interacting_object(self, holding_gt):
        est = replace(holding_gt, objects=holding_gt.objects[:1])
        metrics = evaluate(est, holding_gt)
        assert metrics.miss_detection_rate == pytest.approx(100.0)
        assert metrics.recovery_rate == pytest.approx(0.0)
        assert metrics.iou_3d == pytest.approx(50.0)

    def test_recovery_undefined_without_association(self, holding_gt):
        gt = replace(holding_gt, assoc={})
        assert evaluate(holding_gt, gt).recovery_rate is None


class TestMatching:
    def test_greedy_highest_iou(self):
        gt = [make_box("g0", (0.0, 0.0, 0.5)), make_box("g1", (3.0, 0.0, 0.5))]
        est = [make_box("e0", (0.2, 0.0, 0.5)), make_box("e1", (0.05, 0.0, 0.5)), make_box("e2", (3.0, 0.1, 0.5))]
        matches = match_objects(est, gt)
        assert matches["g0"][0] == "e1"
        assert matches["g1"][0] == "e2"

    def test_each_estimate_used_once(self):
        gt = [make_box("g0", (0.0, 0.0, 0.5)), make_box("g1", (0.1, 0.0, 0.5))]
        matches = match_objects([make_box("e0", (0.0, 0.0, 0.5))], gt)
        assert list(matches) == ["g0"]

    def test_nearest_hip(self):
        gt = [make_human("g0", xy=(0.0, 0.0)), make_human("g1", xy=(2.0, 0.0))]
        est = [make_human("e0", xy=(2.1, 0.0)), make_human("e1", xy=(0.1, 0.0))]
        assert match_humans(est, gt) == {"g0": "e1", "g1": "e0"}


def test_physical_violation(room, camera):
    pg = single_box_graph(room, camera, center=(1.0, 0.0, 0.7))
    assert physical_violation(pg) == pytest.approx(0.2)


def test_batch_and_summary(table_scene, room, camera):
    gt = single_box_graph(room, camera)
    est = single_box_graph(room, camera, center=(1.5, 0.0, 0.5))
    frame = evaluate_batch([("a", table_scene, table_scene, None), ("b", est, gt, None)])
    assert list(frame["scene"]) == ["a", "b"]
    summary = summarize(frame)
    assert summary["iou_3d"] == pytest.approx(0.5 * (100.0 + 100.0 / 3.0))
    assert summary["pose_error_3d"] is None
    assert summary["n_scenes"] == 2
