"""scenemc: holistic 3D indoor scene and human pose reconstruction by MCMC."""

__version__ = "0.1.0"
__author__ = "scenemc Team"

from .core.config import RunConfig
from .core.errors import SceneMCError
from .energy.terms import EnergyModel, EnergyWeights, total_energy
from .hoi.prior import HoiPrior, HoiPriorSet, default_prior_set, fit_prior
from .inference.init import init_scene
from .inference.sampler import Schedule, run_inference
from .scene.model import Camera, Cuboid, HumanPose, Observations, ParseGraph
from .synthetic.harness import SceneSpec, generate_scene
from .synthetic.metrics import Metrics, evaluate

__all__ = [
    "RunConfig", "SceneMCError", "EnergyModel", "EnergyWeights", "total_energy",
    "HoiPrior", "HoiPriorSet", "default_prior_set", "fit_prior", "init_scene",
    "Schedule", "run_inference", "Camera", "Cuboid", "HumanPose", "Observations",
    "ParseGraph", "SceneSpec", "generate_scene", "Metrics", "evaluate",
]
