"""Exception hierarchy for scenemc.

Each error class carries the CLI exit code it maps to.
"""

from typing import Any, Optional


class SceneMCError(Exception):
    """Base class for every scenemc failure."""

    exit_code = 1


class InvalidParameterError(SceneMCError, ValueError):
    """A numeric parameter violates its invariant (scale, size, temperature...)."""

    exit_code = 2


class SchemaError(SceneMCError):
    """A scene, observation, prior or metrics file does not match its schema."""

    exit_code = 2


class ConfigError(SceneMCError):
    """Invalid run configuration."""

    exit_code = 2


class UndefinedMetricsError(SceneMCError):
    """Metrics requested against an empty ground truth."""

    exit_code = 2


class InsufficientDataError(SceneMCError):
    """Not enough samples to fit a prior."""

    exit_code = 3


class GenerationError(SceneMCError):
    """A synthetic scene spec could not be realized."""

    exit_code = 3


class GeometryError(SceneMCError):
    exit_code = 4


class BehindCameraError(GeometryError):
    """Point has nonpositive depth in the camera frame."""


class DegenerateHullError(GeometryError):
    """Convex hull of collinear (or too few) points."""


class UnliftablePoseError(GeometryError):
    """Anchor ray is parallel to the h0 plane or meets it behind the camera."""


class DanglingEdgeError(SceneMCError):
    """A relation edge references a node that does not exist."""

    exit_code = 4


class MissingPriorError(SceneMCError, KeyError):
    """No HOI prior is registered for an action."""

    exit_code = 4

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else "missing prior"


class InitializationError(SceneMCError):
    """The initial parse graph cannot be built from the observations."""

    exit_code = 4


class InferenceAbort(SceneMCError):
    """Inference stopped on a component error; carries the partial trace."""

    exit_code = 4

    def __init__(self, message: str, trace: Optional[Any] = None, cause: Optional[BaseException] = None):
        super().__init__(message)
        self.trace = trace
        self.cause = cause
