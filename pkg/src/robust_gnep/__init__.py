"""Distributed robust generalized Nash equilibrium seeking under polyhedral uncertainty."""

__version__ = "0.1.0"
