"""Pose template bank.

Hip-centered skeletons at scale 1: the person faces +x, left is +y, z is up.
"""

from typing import Dict, Iterable

import numpy as np

from ..scene.model import ANKLE_INDICES, JOINT_NAMES

_UPPER_BODY = {
    "hip": (0.0, 0.0, 0.0),
    "spine": (0.0, 0.0, 0.25),
    "neck": (0.0, 0.0, 0.50),
    "head": (0.0, 0.0, 0.65),
    "nose": (0.10, 0.0, 0.62),
    "l_shoulder": (0.0, 0.18, 0.45),
    "r_shoulder": (0.0, -0.18, 0.45),
    "l_hip": (0.0, 0.10, 0.0),
    "r_hip": (0.0, -0.10, 0.0),
}


def _build(**joints) -> np.ndarray:
    merged = dict(_UPPER_BODY)
    merged.update(joints)
    arr = np.array([merged[name] for name in JOINT_NAMES], dtype=float)
    arr.flags.writeable = False
    return arr


_STANDING_LEGS = {
    "l_knee": (0.0, 0.10, -0.45), "r_knee": (0.0, -0.10, -0.45),
    "l_ankle": (0.0, 0.10, -0.88), "r_ankle": (0.0, -0.10, -0.88),
}

TEMPLATES: Dict[str, np.ndarray] = {
    "stand": _build(
        l_elbow=(0.0, 0.20, 0.17), r_elbow=(0.0, -0.20, 0.17),
        l_wrist=(0.02, 0.20, -0.08), r_wrist=(0.02, -0.20, -0.08),
        **_STANDING_LEGS,
    ),
    "sit": _build(
        l_elbow=(0.20, 0.20, 0.20), r_elbow=(0.20, -0.20, 0.20),
        l_wrist=(0.35, 0.15, 0.36), r_wrist=(0.35, -0.15, 0.36),
        l_knee=(0.45, 0.10, 0.0), r_knee=(0.45, -0.10, 0.0),
        l_ankle=(0.45, 0.10, -0.42), r_ankle=(0.45, -0.10, -0.42),
    ),
    "reach": _build(
        l_elbow=(0.20, 0.20, 0.30), r_elbow=(0.20, -0.20, 0.30),
        l_wrist=(0.40, 0.10, 0.25), r_wrist=(0.40, -0.10, 0.25),
        **_STANDING_LEGS,
    ),
    "phone": _build(
        l_elbow=(0.0, 0.20, 0.17), r_elbow=(0.05, -0.25, 0.35),
        l_wrist=(0.02, 0.20, -0.08), r_wrist=(0.05, -0.12, 0.58),
        **_STANDING_LEGS,
    ),
    "bend": _build(
        spine=(0.20, 0.0, 0.15), neck=(0.40, 0.0, 0.28), head=(0.52, 0.0, 0.33), nose=(0.58, 0.0, 0.25),
        l_shoulder=(0.36, 0.18, 0.26), r_shoulder=(0.36, -0.18, 0.26),
        l_elbow=(0.42, 0.20, 0.0), r_elbow=(0.42, -0.20, 0.0),
        l_wrist=(0.45, 0.20, -0.25), r_wrist=(0.45, -0.20, -0.25),
        l_knee=(0.08, 0.10, -0.43), r_knee=(0.08, -0.10, -0.43),
        l_ankle=(0.0, 0.10, -0.84), r_ankle=(0.0, -0.10, -0.84),
    ),
}

ACTION_TEMPLATE: Dict[str, str] = {
    "sit": "sit",
    "sit-at": "sit",
    "use-laptop": "sit",
    "hold": "reach",
    "read": "reach",
    "make-phone-call": "phone",
    "stand": "stand",
    "walk": "stand",
    "bend": "bend",
}

# When several actions are active the most constraining template wins.
_PRIORITY = ("sit", "phone", "reach", "bend", "stand")


def template_name(actions: Iterable[str]) -> str:
    names = {ACTION_TEMPLATE[a] for a in actions if a in ACTION_TEMPLATE}
    for name in _PRIORITY:
        if name in names:
            return name
    return "stand"


def template_for(actions: Iterable[str]) -> np.ndarray:
    return TEMPLATES[template_name(actions)]


def hip_height(template: np.ndarray) -> float:
    """Height of the hip above the lower ankle."""
    return float(-min(template[i, 2] for i in ANKLE_INDICES))
