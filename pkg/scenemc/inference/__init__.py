"""Initialization and MCMC inference."""
