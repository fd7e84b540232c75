"""Quantitative rectifiability experiments in the Heisenberg group H^k.

Points are numpy arrays whose last axis holds ``(v_1, ..., v_2k, t)``.
"""

from .core import Ball, GroupDim, dilate, inv, kdist, knorm, mul, omega, point

__all__ = [
    "Ball",
    "GroupDim",
    "dilate",
    "inv",
    "kdist",
    "knorm",
    "mul",
    "omega",
    "point",
]

__version__ = "0.1.0"
