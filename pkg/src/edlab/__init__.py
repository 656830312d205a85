"""Desk-scale laboratory for Dirichlet meta-distribution uncertainty methods.

Implements the unified family of evidential classification objectives, the
fixed-target characterization of their optima, bootstrap/ensemble/dropout
teachers with forward-KL distillation, and OOD / selective-classification
evaluation on synthetic 2D Gaussian data.
"""

from .specialfn import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
