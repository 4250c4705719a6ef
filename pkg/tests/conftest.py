"""Shared fixtures for scenemc tests."""

import numpy as np
import pytest

from scenemc.hoi.prior import HoiPrior, HoiPriorSet, default_prior_set
from scenemc.scene.geometry import project_points, projected_hull
from scenemc.scene.model import (
    FLOOR_ID,
    LAYOUT_ID,
    Camera,
    Cuboid,
    DetectedBox,
    DetectedPose,
    Observations,
    ParseGraph,
    pose_from_params,
)
from scenemc.synthetic.templates import TEMPLATES, hip_height


def make_box(node_id, center, size=(1.0, 1.0, 1.0), yaw=0.0, label="box", container=False, synthesized=False):
    return Cuboid(center=center, size=size, yaw=yaw, class_label=label, is_container=container,
                  node_id=node_id, synthesized=synthesized)


def make_human(node_id="human_0", xy=(0.0, 0.0), yaw=0.0, template="stand", actions=("stand",),
               confidence=0.9, floor_z=0.0):
    """Template pose at scale 1 with its feet on the floor."""
    rel = TEMPLATES[template]
    center = (xy[0], xy[1], floor_z + hip_height(rel))
    return pose_from_params(center, 1.0, rel, yaw=yaw, actions=list(actions),
                            confidences={a: confidence for a in actions}, node_id=node_id)


def identity_prior(action="sit", classes=("chair",), key_joint="hip", mean=(0.0, 0.0, 0.0)):
    return HoiPrior(action=action, object_classes=frozenset(classes), key_joint=key_joint,
                    mean=np.array(mean, dtype=float), covariance=np.eye(3))


def detected_pose_for(camera, human, visible=True):
    """Noise-free 2D detection of a human as the camera sees it."""
    uv, depth = project_points(camera, human.joints)
    flags = tuple(bool(visible and d > 0) for d in depth)
    return DetectedPose(joints_2d=uv, visible=flags, actions=human.actions, confidences=human.action_confidence,
                        local_joints=human.joints - human.center)


def detection_for(camera, box, image_size=(640, 480)):
    hull = projected_hull(camera, box, image_size)
    return DetectedBox(class_label=box.class_label, box=hull.bounds().as_box())


@pytest.fixture
def room():
    """6 x 6 x 3 m room with its floor at z = 0."""
    return Cuboid(center=(0.0, 0.0, 1.5), size=(6.0, 6.0, 3.0), class_label="layout", node_id=LAYOUT_ID)


@pytest.fixture
def camera():
    """Camera near the -x wall looking along +x, slightly down."""
    return Camera.looking_at((-2.7, 0.0, 1.5), heading=0.0, pitch=0.3)


@pytest.fixture
def simple_camera():
    """Camera at the origin with identity rotation: it looks along world +z."""
    K = np.array([[600.0, 0.0, 320.0], [0.0, 600.0, 240.0], [0.0, 0.0, 1.0]])
    return Camera(intrinsics=K, rotation=np.eye(3), position=np.zeros(3))


@pytest.fixture
def empty_obs(camera, room):
    return Observations(camera=camera, layout_hint=room)


@pytest.fixture
def empty_graph(room, camera):
    return ParseGraph(layout=room, camera=camera)


@pytest.fixture
def table_scene(room, camera):
    """A table on the floor with a laptop resting on it."""
    table = make_box("obj_0", (1.0, 0.0, 0.375), (1.2, 0.8, 0.75), label="table")
    laptop = make_box("obj_1", (1.0, 0.0, 0.765), (0.35, 0.25, 0.03), label="laptop")
    return ParseGraph(layout=room, camera=camera, objects=(table, laptop),
                      support_edges=(("obj_0", FLOOR_ID), ("obj_1", "obj_0")))


@pytest.fixture
def priors():
    return default_prior_set()


@pytest.fixture
def unit_sit_priors():
    return HoiPriorSet(priors={"sit": identity_prior()})
