"""Simulation and analysis of photon pairs from resonant metasurfaces."""

__version__ = "0.1.0"
