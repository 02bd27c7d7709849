"""Density-over-distance relative localization for UAV swarms."""

__version__ = "0.1.0"
