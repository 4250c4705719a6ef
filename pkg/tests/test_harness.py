"""Synthetic scene generation, rendering and perturbation."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_box
from scenemc.core.errors import GenerationError, InvalidParameterError
from scenemc.energy.terms import collision_energy, support_energy
from scenemc.hoi.prior import HoiPriorSet, default_prior_set, hoi_offset
from scenemc.scene.geometry import projected_hull
from scenemc.scene.model import FLOOR_ID, ParseGraph, validate
from scenemc.synthetic.harness import (
    AugmentedHuman,
    HumanSpec,
    NoiseLevels,
    NoiseModel,
    ObjectSpec,
    SceneSpec,
    drop_detection,
    generate_scene,
    perturb,
    render_observations,
    scene_seeds,
    validate_spec,
)
from scenemc.synthetic.templates import TEMPLATES


@pytest.fixture(scope="module")
def sitting_scene():
    spec = SceneSpec(objects=[ObjectSpec(class_label="chair"), ObjectSpec(class_label="table")],
                     humans=[HumanSpec(actions=["sit"])], seed=5)
    return generate_scene(spec)


@pytest.fixture(scope="module")
def desk_scene():
    spec = SceneSpec(objects=[ObjectSpec(class_label="table"), ObjectSpec(class_label="laptop", on="table")],
                     humans=[HumanSpec(actions=["stand"])], seed=2)
    return generate_scene(spec)


class TestGenerate:
    def test_ground_truth_is_valid(self, sitting_scene, desk_scene):
        for pg, _ in (sitting_scene, desk_scene):
            assert validate(pg) == []

    def test_sitting_offset_at_prior_mean(self, sitting_scene):
        pg, _ = sitting_scene
        ((human_id, object_id, action),) = pg.hoi_edges
        assert action == "sit"
        chair = pg.get_object(object_id)
        assert chair.class_label == "chair"
        prior = default_prior_set().get("sit")
        offset = hoi_offset(pg.get_human(human_id), chair.center, prior.key_joint)
        np.testing.assert_allclose(offset, prior.mean, atol=0.1)

    def test_ground_truth_is_physically_plausible(self, desk_scene):
        pg, _ = desk_scene
        assert support_energy(pg) == pytest.approx(0.0, abs=1e-9)
        assert collision_energy(pg) == pytest.approx(0.0, abs=1e-9)
        laptop = next(o for o in pg.objects if o.class_label == "laptop")
        table = pg.get_object(pg.supporter_of(laptop.node_id))
        assert table.class_label == "table"
        assert laptop.bottom_z == pytest.approx(table.top_z)

    def test_humans_stand_on_floor(self, desk_scene):
        pg, _ = desk_scene
        for human in pg.humans:
            assert pg.supporter_of(human.node_id) == FLOOR_ID
            assert human.feet_z == pytest.approx(pg.floor_z, abs=1e-9)

    def test_observations_match_association(self, desk_scene):
        pg, obs = desk_scene
        assert obs.layout_hint is pg.layout
        for obj in pg.objects:
            det = obs.det_boxes[pg.assoc[obj.node_id]]
            assert det.class_label == obj.class_label
            expected = projected_hull(pg.camera, obj, obs.image_size).bounds().as_box()
            np.testing.assert_allclose(det.box, expected)
        for human in pg.humans:
            assert all(obs.det_poses[pg.assoc[human.node_id]].visible)

    def test_held_object_added(self):
        spec = SceneSpec(humans=[HumanSpec(actions=["hold"])], seed=3)
        pg, _ = generate_scene(spec)
        ((human_id, object_id, action),) = pg.hoi_edges
        assert action == "hold"
        assert pg.get_object(object_id).class_label == "bottle"
        assert pg.supporter_of(object_id) == human_id

    def test_deterministic_per_seed(self):
        spec = SceneSpec(objects=[ObjectSpec(class_label="chair", count=2)], seed=9)
        a, _ = generate_scene(spec)
        b, _ = generate_scene(spec)
        for x, y in zip(a.objects, b.objects):
            np.testing.assert_array_equal(x.center, y.center)
        np.testing.assert_array_equal(a.camera.position, b.camera.position)

    def test_oversized_object(self):
        spec = SceneSpec(objects=[ObjectSpec(class_label="table", size_min=(7.0, 1.0, 0.75))])
        with pytest.raises(GenerationError):
            generate_scene(spec)

    def test_anchored_action_without_object(self):
        with pytest.raises(GenerationError):
            generate_scene(SceneSpec(humans=[HumanSpec(actions=["sit"])]))

    def test_missing_supporter_class(self):
        with pytest.raises(GenerationError):
            generate_scene(SceneSpec(objects=[ObjectSpec(class_label="laptop", on="desk")]))

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            SceneSpec(room_size_min=(6.0, 5.0, 3.0), room_size_max=(5.0, 5.0, 3.0))
        with pytest.raises(ValidationError):
            HumanSpec(actions=["juggle"])

    def test_prior_coverage(self):
        spec = SceneSpec(humans=[HumanSpec(actions=["read"])])
        validate_spec(spec, default_prior_set())
        with pytest.raises(InvalidParameterError):
            validate_spec(spec, HoiPriorSet())


class TestRender:
    def test_missed_detections(self, desk_scene):
        pg, _ = desk_scene
        obs, assoc = render_observations(pg, NoiseModel(miss_probability=1.0), np.random.default_rng(0))
        assert obs.det_boxes == ()
        assert set(assoc) == set(pg.human_ids)

    def test_box_noise_is_seeded(self, desk_scene):
        pg, _ = desk_scene
        noise = NoiseModel(box_sigma_px=3.0, joint_sigma_px=2.0)
        a, _ = render_observations(pg, noise, np.random.default_rng(1))
        b, _ = render_observations(pg, noise, np.random.default_rng(1))
        for x, y in zip(a.det_boxes, b.det_boxes):
            assert x.box == y.box
        for box in a.det_boxes:
            assert box.box[0] <= box.box[2] and box.box[1] <= box.box[3]

    def test_drop_detection_reindexes(self, desk_scene):
        pg, obs = desk_scene
        first = min(pg.object_ids, key=lambda i: pg.assoc[i])
        pg2, obs2 = drop_detection(pg, obs, first)
        assert first not in pg2.assoc
        assert len(obs2.det_boxes) == len(obs.det_boxes) - 1
        for node_id, index in pg2.assoc.items():
            if pg2.get_object(node_id) is not None:
                assert obs2.det_boxes[index] is obs.det_boxes[pg.assoc[node_id]]
            else:
                assert index == pg.assoc[node_id]

    def test_drop_unknown_detection(self, desk_scene):
        pg, obs = desk_scene
        with pytest.raises(InvalidParameterError):
            drop_detection(pg, obs, "human_0")


class TestPerturb:
    @pytest.fixture
    def many_boxes(self, room, camera):
        boxes = tuple(make_box(f"obj_{i}", (0.0, 0.0, 0.5)) for i in range(2000))
        return ParseGraph(layout=room, camera=camera, objects=boxes)

    def test_translation_noise_magnitude(self, many_boxes):
        out = perturb(many_boxes, NoiseLevels(translation=0.3), np.random.default_rng(0))
        shifts = [np.linalg.norm(o.center - (0.0, 0.0, 0.5)) for o in out.objects]
        # mean norm of an isotropic 3D Gaussian
        assert np.mean(shifts) == pytest.approx(0.3 * math.sqrt(8.0 / math.pi), rel=0.05)

    def test_zero_noise_is_identity(self, table_scene):
        out = perturb(table_scene, NoiseLevels(), np.random.default_rng(0))
        for before, after in zip(table_scene.objects, out.objects):
            np.testing.assert_array_equal(before.center, after.center)
            np.testing.assert_array_equal(before.size, after.size)
            assert before.yaw == after.yaw
        assert out.layout is table_scene.layout

    def test_floor_noise_keeps_ceiling(self, table_scene):
        out = perturb(table_scene, NoiseLevels(floor=0.1), np.random.default_rng(2))
        assert out.layout.top_z == pytest.approx(table_scene.layout.top_z)
        assert out.floor_z != table_scene.floor_z

    def test_depth_noise_stays_on_ray(self, table_scene):
        out = perturb(table_scene, NoiseLevels(depth=0.2), np.random.default_rng(4))
        cam = table_scene.camera.position
        for before, after in zip(table_scene.objects, out.objects):
            a, b = before.center - cam, after.center - cam
            np.testing.assert_allclose(np.cross(a, b), 0.0, atol=1e-9)


def test_augmented_human_matches_pose():
    aug = AugmentedHuman.compose("sit", TEMPLATES["sit"], (1.0, 2.0, 0.4), yaw=0.6, scale=1.1)
    pose = aug.to_pose(["sit"], 0.8, "human_0")
    np.testing.assert_allclose(aug.skeleton, pose.joints, atol=1e-12)
    assert pose.confidence("sit") == pytest.approx(0.8)


def test_scene_seeds():
    seeds = scene_seeds(42, 10)
    assert seeds == scene_seeds(42, 10)
    assert len(set(seeds)) == 10
    assert scene_seeds(43, 10) != seeds
