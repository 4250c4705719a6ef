"""Scene representation and geometry."""
