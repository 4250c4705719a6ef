"""Initialization: layout fallback, object back-projection, pose lifting and support assignment."""

import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import detected_pose_for, make_box, make_human
from scenemc.core.errors import InitializationError, UnliftablePoseError
from scenemc.inference.init import (
    DEFAULT_H0,
    SupportPriorTable,
    assign_support,
    choose_supporter,
    default_layout,
    init_scene,
    lift_pose_to_world,
    support_candidates,
    support_score,
)
from scenemc.scene.geometry import project_point
from scenemc.scene.model import FLOOR_ID, LAYOUT_ID, WALL_IDS, Camera, DetectedBox, Observations, ParseGraph, validate
from scenemc.synthetic.templates import TEMPLATES


@pytest.fixture
def level_camera():
    return Camera.looking_at((0.0, 0.0, 1.5), heading=0.0, pitch=0.0)


class TestLift:
    def test_anchor_lands_on_ray_at_height(self, level_camera):
        human = lift_pose_to_world(TEMPLATES["stand"], (320.0, 340.0), level_camera, h0=0.9)
        np.testing.assert_allclose(human.center, (3.6, 0.0, 0.9), atol=1e-9)
        np.testing.assert_allclose(human.joints - human.center, TEMPLATES["stand"], atol=1e-12)

    def test_yaw_recovered_from_template(self, level_camera):
        rotated = TEMPLATES["stand"] @ np.array([[math.cos(0.8), -math.sin(0.8), 0.0],
                                                 [math.sin(0.8), math.cos(0.8), 0.0],
                                                 [0.0, 0.0, 1.0]]).T
        human = lift_pose_to_world(rotated, (320.0, 340.0), level_camera, h0=0.9, template=TEMPLATES["stand"])
        assert human.yaw == pytest.approx(0.8, abs=1e-9)
        np.testing.assert_allclose(human.rel_joints, TEMPLATES["stand"], atol=1e-9)
        np.testing.assert_allclose(human.joints - human.center, rotated, atol=1e-9)

    def test_head_anchor(self, level_camera):
        human = lift_pose_to_world(TEMPLATES["stand"], (320.0, 340.0), level_camera, h0=0.9, anchor="head")
        np.testing.assert_allclose(human.joint("head"), (3.6, 0.0, 0.9), atol=1e-9)

    def test_ray_parallel_to_plane(self, level_camera):
        with pytest.raises(UnliftablePoseError):
            lift_pose_to_world(TEMPLATES["stand"], (320.0, 240.0), level_camera, h0=1.5)

    def test_plane_behind_camera(self, level_camera):
        # ray points upward, the plane is below
        with pytest.raises(UnliftablePoseError):
            lift_pose_to_world(TEMPLATES["stand"], (320.0, 140.0), level_camera, h0=0.9)

    def test_actions_carried(self, level_camera):
        human = lift_pose_to_world(TEMPLATES["sit"], (320.0, 340.0), level_camera, h0=0.42,
                                   actions=["sit"], confidences={"sit": 0.8}, node_id="human_3")
        assert human.active_actions() == ["sit"]
        assert human.confidence("sit") == pytest.approx(0.8)
        assert human.node_id == "human_3"


class TestSupportAssignment:
    def test_laptop_rests_on_table(self, table_scene):
        shelf = make_box("obj_2", (-1.0, 1.0, 0.25), (0.9, 0.35, 0.5), label="shelf", container=True)
        pg = replace(table_scene, objects=table_scene.objects + (shelf,))
        table = SupportPriorTable()
        candidates = support_candidates(pg, "obj_1", table)
        assert {"obj_0", "obj_2", FLOOR_ID} <= set(candidates)
        assert support_score(pg, "obj_1", "obj_0", table) == pytest.approx(0.0, abs=1e-9)
        assert support_score(pg, "obj_1", FLOOR_ID, table) == pytest.approx(0.75)
        assert support_score(pg, "obj_1", "obj_2", table) == pytest.approx(1.25)
        assert support_score(pg, "obj_1", WALL_IDS[0], table) > 2.9
        assert choose_supporter(pg, "obj_1", table) == "obj_0"

    def test_taller_objects_are_not_candidates(self, table_scene):
        assert "obj_1" not in support_candidates(table_scene, "obj_0", SupportPriorTable())

    def test_zero_prior_is_infinite(self, table_scene):
        table = SupportPriorTable(probabilities={"laptop": {"floor": 0.0}})
        assert math.isinf(support_score(table_scene, "obj_1", FLOOR_ID, table))

    def test_probability_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            SupportPriorTable(probabilities={"laptop": {"floor": 1.5}})

    def test_bottle_held_by_human(self, room, camera):
        human = make_human()
        bottle = make_box("obj_0", human.joint("r_wrist"), (0.08, 0.08, 0.25), label="bottle")
        pg = ParseGraph(layout=room, camera=camera, objects=(bottle,), humans=(human,))
        pg = assign_support(pg, SupportPriorTable())
        assert dict(pg.support_edges) == {"obj_0": "human_0", "human_0": FLOOR_ID}
        assert validate(pg) == []

    def test_one_edge_per_node(self, table_scene):
        pg = assign_support(replace(table_scene, support_edges=()), SupportPriorTable())
        assert pg.support_edges == (("obj_0", FLOOR_ID), ("obj_1", "obj_0"))


class TestInitScene:
    def test_requires_floor_hypothesis(self, camera):
        with pytest.raises(InitializationError):
            init_scene(Observations(camera=camera))

    def test_default_layout_from_floor_height(self, camera):
        pg = init_scene(Observations(camera=camera), floor_z=0.0)
        assert pg.layout.node_id == LAYOUT_ID
        assert pg.floor_z == pytest.approx(0.0)
        assert pg.layout.center[0] - 0.5 * pg.layout.size[0] < camera.position[0]

    def test_default_layout_faces_heading(self):
        cam = Camera.looking_at((1.0, 2.0, 1.4), heading=math.pi / 2, pitch=0.2)
        layout = default_layout(cam, floor_z=-0.5)
        assert layout.yaw == pytest.approx(math.pi / 2)
        assert layout.bottom_z == pytest.approx(-0.5)
        np.testing.assert_allclose(layout.center[:2], (1.0, 4.5), atol=1e-9)

    def test_chair_back_projected_onto_floor(self, camera, room):
        obs = Observations(camera=camera, det_boxes=(DetectedBox("chair", (280.0, 260.0, 360.0, 340.0)),),
                           layout_hint=room)
        pg = init_scene(obs)
        chair = pg.get_object("obj_0")
        assert chair.center[0] == pytest.approx(-0.214, abs=0.01)
        assert chair.center[1] == pytest.approx(0.0, abs=1e-9)
        assert chair.bottom_z == pytest.approx(0.0)
        assert pg.assoc == {"obj_0": 0}
        assert pg.supporter_of("obj_0") == FLOOR_ID
        assert validate(pg) == []

    def test_unknown_class_gets_default_size(self, camera, room):
        obs = Observations(camera=camera, det_boxes=(DetectedBox("gizmo", (280.0, 260.0, 360.0, 340.0)),),
                           layout_hint=room)
        np.testing.assert_allclose(init_scene(obs).objects[0].size, (0.5, 0.5, 0.5))

    def test_lifted_human_matches_ground_truth(self, camera, room):
        gt = make_human(xy=(0.5, 0.0), yaw=math.pi)
        obs = Observations(camera=camera, det_poses=(detected_pose_for(camera, gt),), layout_hint=room)
        pg = init_scene(obs, lift_from_floor_contact=True)
        human = pg.get_human("human_0")
        np.testing.assert_allclose(human.joints, gt.joints, atol=1e-9)
        assert abs(abs(human.yaw) - math.pi) < 1e-9
        assert human.active_actions() == ["stand"]
        assert pg.assoc == {"human_0": 0}
        assert pg.supporter_of("human_0") == FLOOR_ID

    def test_template_used_without_lifter_output(self, camera, room):
        gt = make_human(xy=(0.5, 0.0))
        det = replace(detected_pose_for(camera, gt), local_joints=None)
        pg = init_scene(Observations(camera=camera, det_poses=(det,), layout_hint=room), lift_from_floor_contact=True)
        human = pg.humans[0]
        # the template faces the camera
        assert abs(abs(human.yaw) - math.pi) < 1e-9
        assert human.feet_z == pytest.approx(0.0, abs=1e-9)

    def test_fixed_head_height(self, camera, room):
        gt = make_human(xy=(0.5, 0.0))
        pose = detected_pose_for(camera, gt)
        hidden_hip = replace(pose, visible=tuple(i != 0 for i in range(len(pose.visible))))
        obs = Observations(camera=camera, det_poses=(hidden_hip,), layout_hint=room)
        pg = init_scene(obs, lift_from_floor_contact=False, h0={"head": 1.7})
        assert pg.humans[0].joint("head")[2] == pytest.approx(1.7)

    def test_default_hip_height(self, camera, room):
        gt = make_human(xy=(0.5, 0.0))
        pg = init_scene(Observations(camera=camera, det_poses=(detected_pose_for(camera, gt),), layout_hint=room))
        human = pg.humans[0]
        assert human.joint("hip")[2] == pytest.approx(DEFAULT_H0["hip"])
        # the hip stays on the detected hip's camera ray
        np.testing.assert_allclose(project_point(camera, human.joint("hip")), project_point(camera, gt.joint("hip")),
                                   atol=1e-6)

    def test_default_head_height_when_hip_hidden(self, camera, room):
        pose = detected_pose_for(camera, make_human(xy=(0.5, 0.0)))
        hidden_hip = replace(pose, visible=tuple(i != 0 for i in range(len(pose.visible))))
        pg = init_scene(Observations(camera=camera, det_poses=(hidden_hip,), layout_hint=room))
        assert pg.humans[0].joint("head")[2] == pytest.approx(DEFAULT_H0["head"])

    def test_floor_contact_lift_puts_feet_on_floor(self, camera, room):
        gt = make_human(xy=(0.5, 0.0), template="reach")
        obs = Observations(camera=camera, det_poses=(detected_pose_for(camera, gt),), layout_hint=room)
        assert init_scene(obs, lift_from_floor_contact=True).humans[0].feet_z == pytest.approx(0.0, abs=1e-9)
        assert init_scene(obs).humans[0].feet_z != pytest.approx(0.0, abs=1e-3)

    def test_pose_without_anchor(self, camera, room):
        pose = detected_pose_for(camera, make_human(xy=(0.5, 0.0)), visible=False)
        with pytest.raises(UnliftablePoseError):
            init_scene(Observations(camera=camera, det_poses=(pose,), layout_hint=room))
