"""Simulation and diagnostics for dilute Stokes sedimentation of many spheres."""

__version__ = "0.1.0"
