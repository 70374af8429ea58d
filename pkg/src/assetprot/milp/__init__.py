"""MILP representation, exact solvers and LP-file bridge."""

from .bnb import solve_exact
from .model import Constraint, MilpModel, ModelError, Sense, Solution, Status, UnboundedError, Variable, VarKind

__all__ = [
    "Constraint",
    "MilpModel",
    "ModelError",
    "Sense",
    "Solution",
    "Status",
    "UnboundedError",
    "Variable",
    "VarKind",
    "solve_exact",
]
