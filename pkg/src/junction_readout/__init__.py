"""Simulation and design toolkit for a transmon read out through a junction coupler."""

__version__ = "0.1.0"
