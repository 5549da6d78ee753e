"""Exact tools for welfare-sharing games and the generalized weighted Shapley characterization."""

__version__ = "0.1.0"
