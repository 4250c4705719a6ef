"""Synthetic scenes and evaluation metrics."""
