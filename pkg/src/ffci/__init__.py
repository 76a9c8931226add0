"""Causal discovery from observational and interventional data under latent confounding and post-treatment selection."""

__version__ = "0.1.0"
