"""symles: a desk-scale laboratory for symmetry-preserving LES closures."""

__version__ = "0.1.0"
