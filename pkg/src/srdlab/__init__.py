"""Numerical laboratory for self-repelling diffusions on the flat circle."""

__version__ = "0.1.0"

from .model import (
    DegenerateModeError,
    InvariantLaw,
    SpectralModel,
    SystemState,
    invariant_law,
    make_state,
    torus_model,
)
from .tensors import ChiTensors, compute_chi, selection_rule_nonzero
from .torus import BasisFunction, QuadratureRule, eigenvalue, eval_basis, make_quadrature

__all__ = [
    "BasisFunction",
    "ChiTensors",
    "DegenerateModeError",
    "InvariantLaw",
    "QuadratureRule",
    "SpectralModel",
    "SystemState",
    "compute_chi",
    "eigenvalue",
    "eval_basis",
    "invariant_law",
    "make_quadrature",
    "make_state",
    "selection_rule_nonzero",
    "torus_model",
]
