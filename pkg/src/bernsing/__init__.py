"""Exact and Monte Carlo tools for singularity of random Bernoulli matrices."""

__version__ = "0.1.0"
