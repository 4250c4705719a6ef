"""Core scenemc components: configuration and errors."""
