"""Simulation and analysis of photon statistics from a single molecular emitter."""

__version__ = "0.1.0"
