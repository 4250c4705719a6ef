"""Run configuration for scenemc."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..energy.terms import ABLATIONS, EnergyWeights
from ..inference.init import DEFAULT_CLASS_SIZES, DEFAULT_H0, DEFAULT_SUPPORT_HEIGHTS, SupportPriorTable
from ..inference.sampler import Schedule
from .errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "SCENEMC_"
CONFIG_ENV_VAR = "SCENEMC_CONFIG"


class RunConfig(BaseModel):
    """Every tunable of an inference or synthesis run."""

    model_config = ConfigDict(extra="forbid")

    # Energy
    weights: EnergyWeights = Field(default_factory=EnergyWeights)
    ablation: Literal["full", "no-hoi", "no-phy"] = Field(default="full", description="Named weight ablation")
    behind_camera_penalty: float = Field(default=1.0, ge=0.0, description="Cost of a projection behind the camera")
    invisible_pose_penalty: float = Field(default=1.0, ge=0.0, description="Cost of a pose with no visible joint")
    human_margin: float = Field(default=0.10, gt=0.0, description="Human volume proxy margin in meters")
    wall_contact_margin: float = Field(default=0.05, gt=0.0, description="Distance in meters within which a node touches a wall")
    object_likelihood: Literal["hull", "hull-bounds"] = Field(default="hull", description="Object reprojection mode")

    # Sampler
    schedule: Schedule = Field(default_factory=Schedule)
    hoi_confidence: float = Field(default=0.5, ge=0.0, le=1.0, description="Action confidence for HOI matching")
    topdown_confidence: float = Field(default=0.5, ge=0.0, le=1.0, description="Action confidence for top-down sampling")
    hoi_sanity_nll: float = Field(default=25.0, description="Warn on matched HOIs above this nll")
    seed: int = Field(default=0, ge=0, description="Sampler seed")

    # Initialization
    support_priors: SupportPriorTable = Field(default_factory=SupportPriorTable)
    class_sizes: Dict[str, Tuple[float, float, float]] = Field(default_factory=lambda: dict(DEFAULT_CLASS_SIZES))
    class_support_heights: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_SUPPORT_HEIGHTS))
    h0: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_H0))
    floor_z: Optional[float] = Field(default=None, description="Known floor height; else the layout hint")
    lift_from_floor_contact: bool = Field(default=False, description="Lift so the feet touch the floor, not to h0")

    # Paths
    prior_file: Optional[Path] = Field(default=None, description="hoi-prior/v1 file; built-in priors when unset")

    @field_validator("class_sizes")
    @classmethod
    def _positive_sizes(cls, value):
        for label, size in value.items():
            if min(size) <= 0.0:
                raise ValueError(f"class size for '{label}' must be positive")
        return value

    @field_validator("prior_file")
    @classmethod
    def _prior_exists(cls, value):
        if value is not None and not Path(value).exists():
            raise ValueError(f"prior file {value} does not exist")
        return value

    def effective_weights(self) -> EnergyWeights:
        return EnergyWeights.ablation(self.ablation, self.weights)

    def energy_options(self) -> Dict[str, Any]:
        return {
            "human_margin": self.human_margin,
            "wall_contact_margin": self.wall_contact_margin,
            "behind_camera_penalty": self.behind_camera_penalty,
            "invisible_pose_penalty": self.invisible_pose_penalty,
            "object_likelihood": self.object_likelihood,
        }

    @classmethod
    def from_pairs(cls, pairs: Dict[str, Any], base: Optional["RunConfig"] = None) -> "RunConfig":
        """Apply dotted-key overrides on top of `base` (defaults when None)."""
        data = (base or cls()).model_dump(mode="json")
        for key, value in pairs.items():
            _set_dotted(data, key, value)
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            err = e.errors()[0]
            location = ".".join(str(p) for p in err["loc"])
            raise ConfigError(f"invalid config value for '{location}': {err['msg']}") from e

    @classmethod
    def load_config(cls, config_path: Optional[Path] = None) -> "RunConfig":
        """Load configuration from file or environment.

        The file comes from `config_path`, else SCENEMC_CONFIG; SCENEMC_<A__B>
        variables then override single keys.
        """
        load_dotenv()
        if config_path is None and os.environ.get(CONFIG_ENV_VAR):
            config_path = Path(os.environ[CONFIG_ENV_VAR])

        pairs: Dict[str, Any] = {}
        if config_path is not None:
            config_path = Path(config_path)
            if not config_path.exists():
                raise ConfigError(f"config file {config_path} does not exist")
            pairs.update(parse_pairs(config_path.read_text(), str(config_path)))
            logger.info(f"Loaded {len(pairs)} config keys from {config_path}")

        env_pairs = {k[len(ENV_PREFIX):].lower().replace("__", "."): _parse_value(v)
                     for k, v in os.environ.items()
                     if k.startswith(ENV_PREFIX) and k != CONFIG_ENV_VAR}
        if env_pairs:
            logger.debug(f"Environment overrides: {sorted(env_pairs)}")
        pairs.update(env_pairs)
        return cls.from_pairs(pairs)

    def to_lines(self) -> List[str]:
        return [f"{key} = {json.dumps(value)}" for key, value in _flatten(self.model_dump(mode="json"))]

    @classmethod
    def dump_defaults(cls) -> str:
        return "\n".join(cls().to_lines()) + "\n"

    def save_config(self, config_path: Path) -> None:
        """Save configuration to file."""
        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text("\n".join(self.to_lines()) + "\n")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_pairs(text: str, source: str = "config") -> Dict[str, Any]:
    """Parse `dotted.key = value` lines; `#` starts a comment line."""
    pairs: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        pairs[key] = _parse_value(value.strip())
    return pairs


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigError(f"config key '{key}': '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def _flatten(data: Dict[str, Any], prefix: str = "") -> List[Tuple[str, Any]]:
    items: List[Tuple[str, Any]] = []
    for key in sorted(data):
        value = data[key]
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            items.extend(_flatten(value, dotted + "."))
        else:
            items.append((dotted, value))
    return items


__all__ = ["RunConfig", "parse_pairs", "ABLATIONS", "ENV_PREFIX", "CONFIG_ENV_VAR"]
