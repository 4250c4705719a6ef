"""Per-action Gaussian spatial priors between human key joints and object centers."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.errors import InsufficientDataError, InvalidParameterError, MissingPriorError
from ..scene.model import HOI_ACTIONS, JOINT_INDEX, Cuboid, HumanPose, ParseGraph, rotation_z

logger = logging.getLogger(__name__)

PRIOR_SCHEMA = "hoi-prior/v1"
RIDGE = 1e-4
MIN_SAMPLES = 4
WRIST_MIDPOINT = "wrist_midpoint"

DEFAULT_KEY_JOINTS: Dict[str, str] = {
    "sit": "hip",
    "sit-at": "hip",
    "hold": "r_wrist",
    "read": "r_wrist",
    "make-phone-call": "r_wrist",
    "use-laptop": WRIST_MIDPOINT,
}

DEFAULT_OBJECT_CLASSES: Dict[str, FrozenSet[str]] = {
    "sit": frozenset({"chair", "sofa", "bed", "stool"}),
    "sit-at": frozenset({"table", "desk"}),
    "read": frozenset({"book", "notebook", "tablet", "phone"}),
    "make-phone-call": frozenset({"phone"}),
    "hold": frozenset({"bottle", "cup", "phone", "book"}),
    "use-laptop": frozenset({"laptop"}),
}

# Class a top-down sampled object gets for each action.
DEFAULT_TOPDOWN_CLASS: Dict[str, str] = {
    "sit": "chair",
    "sit-at": "table",
    "read": "book",
    "make-phone-call": "phone",
    "hold": "bottle",
    "use-laptop": "laptop",
}

# Offsets are object center minus key joint, in the human's yaw frame
# (x forward, y left, z up), meters.
_DEFAULT_MODES: Dict[str, Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = {
    "sit": ((-0.05, 0.0, 0.03), (0.05, 0.05, 0.03)),
    "sit-at": ((0.65, 0.0, -0.045), (0.10, 0.15, 0.03)),
    "hold": ((0.03, 0.0, 0.02), (0.03, 0.03, 0.03)),
    "read": ((0.08, 0.10, 0.05), (0.04, 0.05, 0.04)),
    "make-phone-call": ((0.0, 0.03, 0.03), (0.02, 0.02, 0.03)),
    "use-laptop": ((0.15, 0.0, -0.015), (0.05, 0.05, 0.02)),
}


@dataclass(frozen=True, eq=False)
class HoiPrior:
    """Trivariate Gaussian over the object offset for one action."""

    action: str
    object_classes: FrozenSet[str]
    key_joint: str
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if mean.shape != (3,) or cov.shape != (3, 3):
            raise InvalidParameterError(f"prior '{self.action}': mean must be 3-vector and covariance 3x3")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidParameterError(f"prior '{self.action}' has non-finite parameters")
        if np.max(np.abs(cov - cov.T)) > 1e-9:
            raise InvalidParameterError(f"prior '{self.action}': covariance is not symmetric")
        smallest = float(np.linalg.eigvalsh(cov)[0])
        if smallest < RIDGE * (1.0 - 1e-6):
            raise InvalidParameterError(
                f"prior '{self.action}': smallest covariance eigenvalue {smallest:.3g} below ridge {RIDGE}")
        if self.key_joint != WRIST_MIDPOINT and self.key_joint not in JOINT_INDEX:
            raise InvalidParameterError(f"prior '{self.action}': unknown key joint '{self.key_joint}'")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "object_classes", frozenset(self.object_classes))
        object.__setattr__(self, "_dist", stats.multivariate_normal(mean=mean, cov=cov))

    def logpdf(self, offset) -> float:
        return float(self._dist.logpdf(np.asarray(offset, dtype=float)))


@dataclass(frozen=True)
class HoiPriorSet:
    priors: Dict[str, HoiPrior] = field(default_factory=dict)
    version: str = PRIOR_SCHEMA

    def get(self, action: str) -> HoiPrior:
        try:
            return self.priors[action]
        except KeyError:
            raise MissingPriorError(f"no HOI prior for action '{action}'") from None

    def __contains__(self, action: str) -> bool:
        return action in self.priors

    @property
    def actions(self) -> List[str]:
        return sorted(self.priors)


def fit_prior(action: str, samples: Iterable[Sequence[float]],
              object_classes: Optional[Iterable[str]] = None,
              key_joint: Optional[str] = None) -> HoiPrior:
    """Maximum-likelihood Gaussian (N divisor) plus a ridge of RIDGE * I.

    Samples are sorted before summation so the result does not depend on
    input order.
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or (len(data) and data.shape[1] != 3):
        raise InvalidParameterError(f"samples for '{action}' must be 3-vectors, got shape {data.shape}")
    if len(data) < MIN_SAMPLES:
        raise InsufficientDataError(f"action '{action}' has {len(data)} samples, need at least {MIN_SAMPLES}")
    if not np.all(np.isfinite(data)):
        raise InvalidParameterError(f"samples for '{action}' contain non-finite values")

    data = data[np.lexsort(data.T[::-1])]
    n = len(data)
    mean = data.sum(axis=0) / n
    centered = data - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T) + RIDGE * np.eye(3)

    if object_classes is None:
        object_classes = DEFAULT_OBJECT_CLASSES.get(action, frozenset())
    if key_joint is None:
        key_joint = DEFAULT_KEY_JOINTS.get(action, "hip")
    logger.debug(f"Fitted prior '{action}' from {n} samples, mean={mean.round(4).tolist()}")
    return HoiPrior(action=action, object_classes=frozenset(object_classes), key_joint=key_joint,
                    mean=mean, covariance=cov)


def nll(prior: HoiPrior, offset) -> float:
    """Exact trivariate Gaussian negative log density."""
    return -prior.logpdf(offset)


def key_joint_position(human: HumanPose, key_joint: str) -> np.ndarray:
    if key_joint == WRIST_MIDPOINT:
        return 0.5 * (human.joint("l_wrist") + human.joint("r_wrist"))
    return human.joint(key_joint)


def hoi_offset(human: HumanPose, obj_center, key_joint: str) -> np.ndarray:
    """Object center relative to the key joint, in the human's yaw frame.

    The sign is object minus joint: x points the way the human faces, y to
    their left and z up, so an object in front of the joint has positive x.
    `sample_object_given_pose` applies the inverse.
    """
    world = np.asarray(obj_center, dtype=float) - key_joint_position(human, key_joint)
    return world @ rotation_z(human.yaw)


def interaction_nll(prior: HoiPrior, human: HumanPose, obj: Cuboid) -> float:
    return nll(prior, hoi_offset(human, obj.center, prior.key_joint))


def _confidence(human: HumanPose, action: str, obs=None, pg: Optional[ParseGraph] = None) -> float:
    if obs is not None and pg is not None and human.node_id in pg.assoc:
        idx = pg.assoc[human.node_id]
        if idx < len(obs.det_poses):
            return obs.det_poses[idx].confidence(action)
    return human.confidence(action)


def confident_interactions(pg: ParseGraph, conf_threshold: float = 0.5, obs=None) -> List[Tuple[HumanPose, str]]:
    """(human, action) pairs whose HOI action is active above the threshold."""
    pairs = []
    for human in sorted(pg.humans, key=lambda h: h.node_id):
        for action in human.active_actions():
            if action in HOI_ACTIONS and _confidence(human, action, obs, pg) >= conf_threshold:
                pairs.append((human, action))
    return pairs


def match_interactions(pg: ParseGraph, obs, priors: HoiPriorSet,
                       conf_threshold: float = 0.5) -> List[Tuple[str, str, str]]:
    """Pick, for each confident HOI, the admissible object minimizing the nll.

    Objects may serve several humans. Ties are broken on geometry so the
    result does not depend on object ids.
    """
    edges: List[Tuple[str, str, str]] = []
    for human, action in confident_interactions(pg, conf_threshold, obs):
        prior = priors.get(action)
        best = None
        for obj in pg.objects:
            if obj.class_label not in prior.object_classes:
                continue
            key = (interaction_nll(prior, human, obj), tuple(obj.center), tuple(obj.size))
            if best is None or key < best[0]:
                best = (key, obj)
        if best is None:
            logger.info(f"No admissible object for '{action}' of {human.node_id}; left for top-down sampling")
            continue
        edges.append((human.node_id, best[1].node_id, action))
        logger.debug(f"Matched {human.node_id} -{action}-> {best[1].node_id} (nll={best[0][0]:.3f})")
    return edges


def unmatched_interactions(pg: ParseGraph, conf_threshold: float = 0.5, obs=None) -> List[Tuple[HumanPose, str]]:
    matched = {(h, a) for h, _, a in pg.hoi_edges}
    return [(human, action) for human, action in confident_interactions(pg, conf_threshold, obs)
            if (human.node_id, action) not in matched]


def sample_object_given_pose(prior: HoiPrior, human: HumanPose,
                             rng: Optional[np.random.Generator] = None, jitter: bool = False) -> np.ndarray:
    """Object center at the prior mode mapped through the human's frame.

    With jitter the offset is drawn from the prior instead of taken at its mean.
    """
    offset = prior.mean
    if jitter:
        if rng is None:
            raise InvalidParameterError("jittered sampling needs an rng")
        offset = rng.multivariate_normal(prior.mean, prior.covariance)
    return key_joint_position(human, prior.key_joint) + rotation_z(human.yaw) @ offset


def default_prior_set() -> HoiPriorSet:
    """Priors for the six merged HOIs, matching the shipped pose templates."""
    priors = {}
    for action in HOI_ACTIONS:
        mean, sigma = _DEFAULT_MODES[action]
        cov = np.diag(np.square(sigma)) + RIDGE * np.eye(3)
        priors[action] = HoiPrior(action=action, object_classes=DEFAULT_OBJECT_CLASSES[action],
                                  key_joint=DEFAULT_KEY_JOINTS[action], mean=mean, covariance=cov)
    return HoiPriorSet(priors=priors)


def gaussian_entropy(prior: HoiPrior) -> float:
    """Differential entropy of the prior; the expected nll of its own samples."""
    _, logdet = np.linalg.slogdet(prior.covariance)
    return 0.5 * (3.0 * (1.0 + math.log(2.0 * math.pi)) + logdet)
