"""Simulation of a satellite compute cluster: orbits, awareness, scheduling."""

__version__ = "0.1.0"
