"""Energy terms of the scene parse graph."""
