"""Escaping continua of entire functions in logarithmic coordinates.

Explicit exponential and cosine-hyperbolic families, their logarithmic
transforms, external addresses of escaping orbits, the pullback
construction of unbounded escaping curves ("hairs"), and numerical
checks of the surrounding topological lemmas.
"""

from escapekit.config import get_tolerance, set_tolerance
from escapekit.geometry import Disk, HalfPlane, Polyline
from escapekit.models import EntireModel, Family, LogTransform, TractLabel

__all__ = [
    "Disk",
    "EntireModel",
    "Family",
    "HalfPlane",
    "LogTransform",
    "Polyline",
    "TractLabel",
    "get_tolerance",
    "set_tolerance",
]

__version__ = "0.1.0"
