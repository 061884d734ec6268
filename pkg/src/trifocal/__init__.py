"""Trifocal minimal-problem solvers (Chicago and Cleveland)."""

from .geometry import CHICAGO, CLEVELAND, CameraPose, ProblemInstance, Quaternion, SceneConfig

__all__ = [
    "CHICAGO",
    "CLEVELAND",
    "CameraPose",
    "ProblemInstance",
    "Quaternion",
    "SceneConfig",
]

__version__ = "0.1.0"
