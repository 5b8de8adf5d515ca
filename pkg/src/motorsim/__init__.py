"""Simulation and analysis of interacting muscle motor ensembles."""

__version__ = "0.1.0"
