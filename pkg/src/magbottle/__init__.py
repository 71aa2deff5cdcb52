"""Magnetic bottles on the Poincare half-plane: discrete eigenvalue counts
and Weyl-type asymptotics."""

__version__ = "0.1.0"

from .eigencount import CountResult, inertia_count, lowest_eigenpairs
from .expr import ExprSyntaxError, parse
from .fields import PRESETS, FieldModel, verify_bottle_conditions
from .gauge import MagneticPotential
from .hyperbolic import SolverPolicy, count_eigenvalues
from .landau import landau_levels
from .rectangle import dos_constant_field, landau_count
from .weyl import omega, weyl_bracket, weyl_main_term

__all__ = [
    "CountResult", "ExprSyntaxError", "FieldModel", "MagneticPotential", "PRESETS", "SolverPolicy",
    "count_eigenvalues", "dos_constant_field", "inertia_count", "landau_count", "landau_levels",
    "lowest_eigenpairs", "omega", "parse", "verify_bottle_conditions", "weyl_bracket", "weyl_main_term",
]
