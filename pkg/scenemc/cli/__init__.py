"""CLI module for scenemc."""

from .main import app

__all__ = ["app"]
