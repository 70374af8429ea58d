"""Solver-agnostic MILP representation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class VarKind(str, Enum):
    BINARY = "binary"
    INTEGER = "integer"
    CONTINUOUS = "continuous"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


@dataclass(frozen=True)
class Variable:
    index: int
    label: str
    kind: VarKind
    lower: float
    upper: float

    @property
    def is_integer(self) -> bool:
        return self.kind is not VarKind.CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: Sense
    rhs: float


class ModelError(ValueError):
    pass


class MilpModel:
    """Maximisation MILP assembled incrementally, then frozen.

    Variables and constraints are appended with :meth:`add_var` and
    :meth:`add_constraint`; :meth:`freeze` locks the model and builds the
    sparse constraint matrix used by the solvers.
    """

    def __init__(self, name: str = "model", config: Optional[Mapping] = None):
        self.name = name
        self.config = dict(config or {})
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._labels: dict[str, int] = {}
        self._frozen = False
        self._arrays = None

    # -- building ---------------------------------------------------------
    def _check_open(self):
        if self._frozen:
            raise ModelError("model is frozen")

    def add_var(self, label: str, kind: VarKind | str = VarKind.CONTINUOUS, lower: float = 0.0, upper: float = math.inf) -> int:
        self._check_open()
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if label in self._labels:
            raise ModelError(f"duplicate variable label {label!r}")
        if not (lower <= upper) or math.isnan(lower) or math.isnan(upper):
            raise ModelError(f"inconsistent bounds for {label}: [{lower}, {upper}]")
        idx = len(self.variables)
        self.variables.append(Variable(idx, label, kind, float(lower), float(upper)))
        self._labels[label] = idx
        return idx

    def add_constraint(self, coeffs: Mapping[int, float] | Sequence[tuple[int, float]], sense: Sense | str, rhs: float, name: str = "") -> int:
        self._check_open()
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint {name!r} references undeclared variable {j}")
            if not math.isfinite(a):
                raise ModelError(f"constraint {name!r} has non-finite coefficient")
            merged[j] = merged.get(j, 0.0) + float(a)
        if not math.isfinite(rhs):
            raise ModelError(f"constraint {name!r} has non-finite rhs")
        name = name or f"c{len(self.constraints)}"
        self.constraints.append(Constraint(name, tuple((j, a) for j, a in merged.items() if a != 0.0), Sense(sense), float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0) -> None:
        self._check_open()
        self.objective = {j: float(a) for j, a in coeffs.items() if a != 0.0}
        self.objective_constant = float(constant)

    def freeze(self) -> "MilpModel":
        self._frozen = True
        self._arrays = None
        return self

    # -- queries ----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def index(self, label: str) -> int:
        return self._labels[label]

    def has(self, label: str) -> bool:
        return label in self._labels

    def var(self, label: str) -> Variable:
        return self.variables[self._labels[label]]

    @property
    def integer_indices(self) -> np.ndarray:
        return np.array([v.index for v in self.variables if v.is_integer], dtype=int)

    def arrays(self):
        """``(c, A_csr, row_lo, row_hi, col_lo, col_hi, is_int)`` for maximisation."""
        if self._arrays is not None:
            return self._arrays
        n, m = self.n_vars, self.n_constraints
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        rows, cols, vals = [], [], []
        lo = np.full(m, -np.inf)
        hi = np.full(m, np.inf)
        for r, con in enumerate(self.constraints):
            for j, a in con.coeffs:
                rows.append(r)
                cols.append(j)
                vals.append(a)
            if con.sense is not Sense.GE:
                hi[r] = con.rhs
            if con.sense is not Sense.LE:
                lo[r] = con.rhs
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        col_lo = np.array([v.lower for v in self.variables])
        col_hi = np.array([v.upper for v in self.variables])
        is_int = np.array([v.is_integer for v in self.variables], dtype=bool)
        out = (c, A, lo, hi, col_lo, col_hi, is_int)
        if self._frozen:
            self._arrays = out
        return out

    def objective_value(self, x: np.ndarray) -> float:
        return self.objective_constant + float(sum(a * x[j] for j, a in self.objective.items()))

    def violations(self, x: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Names of constraints, bounds or integrality conditions ``x`` violates."""
        out = []
        for v in self.variables:
            if x[v.index] < v.lower - tol or x[v.index] > v.upper + tol:
                out.append(f"bound:{v.label}")
            if v.is_integer and abs(x[v.index] - round(x[v.index])) > tol:
                out.append(f"integrality:{v.label}")
        for con in self.constraints:
            lhs = sum(a * x[j] for j, a in con.coeffs)
            scale = tol * max(1.0, abs(con.rhs))
            if (con.sense is Sense.LE and lhs > con.rhs + scale) or (con.sense is Sense.GE and lhs < con.rhs - scale) or (
                con.sense is Sense.EQ and abs(lhs - con.rhs) > scale
            ):
                out.append(con.name)
        return out


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIME_LIMIT = "time_limit"


@dataclass
class Solution:
    status: Status
    values: Optional[np.ndarray]
    objective: Optional[float]
    bound: Optional[float] = None
    nodes: int = 0
    runtime: float = 0.0
    solver: str = "bnb"
    incumbents: list = field(default_factory=list)

    @property
    def has_values(self) -> bool:
        return self.values is not None

    @property
    def gap(self) -> Optional[float]:
        if self.objective is None or self.bound is None:
            return None
        return abs(self.bound - self.objective) / max(1e-9, abs(self.objective))

    def value(self, model: MilpModel, label: str, default: float = 0.0) -> float:
        if not model.has(label):
            return default
        return float(self.values[model.index(label)])


class UnboundedError(ModelError):
    pass
