"""Disciplined convex modelling front-end."""

from .atoms import AtomDescriptor, Curvature, Monotonicity, Template, atom_library, get_atom
from .expr import Atom, Constant, Constraint, Domain, Expression, Model, Op, Sign, Variable
from .lower import (DcpError, LoweredModel, constraint_accepted, constraint_curvature, find_unknown,
                    lower, sign, verify)

__all__ = [
    "Atom", "AtomDescriptor", "Constant", "Constraint", "Curvature", "DcpError", "Domain",
    "Expression", "LoweredModel", "Model", "Monotonicity", "Op", "Sign", "Template", "Variable",
    "atom_library", "constraint_accepted", "constraint_curvature", "find_unknown", "get_atom",
    "lower", "sign", "verify",
]
