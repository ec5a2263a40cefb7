"""Topological pumping of two interacting bosons in a tilted Rice-Mele chain."""
from .model import CELL, ModelParams, build_basis

__version__ = "0.1.0"

__all__ = ["CELL", "ModelParams", "build_basis", "__version__"]
