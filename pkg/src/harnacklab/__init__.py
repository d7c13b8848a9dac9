"""Numerical laboratory for fully nonlinear curvature flows of convex hypersurfaces."""
from .speeds import (
    CATALOG_KEYS,
    HarmonicComposite,
    KHarmonic,
    SigmaRatio,
    SpeedFunction,
    Trace,
    parse_speed,
)

__version__ = "0.1.0"
__all__ = [
    "CATALOG_KEYS", "HarmonicComposite", "KHarmonic", "SigmaRatio",
    "SpeedFunction", "Trace", "parse_speed",
]
