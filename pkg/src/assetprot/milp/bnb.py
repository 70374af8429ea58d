"""LP-based branch and bound.

Node LPs are solved with HiGHS' dual simplex through ``highspy``; the solver
object is reused across nodes so each child re-optimises from its parent's
basis after a bound change.  Search order, branching and tie-breaking are
deterministic: most-fractional variable, ties by lowest label, up-branch
explored first while diving, otherwise best bound with FIFO tie-break.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from typing import Optional

import highspy
import numpy as np

from .model import MilpModel, Solution, Status, UnboundedError

log = logging.getLogger(__name__)

INT_TOL = 1e-6
OBJ_TOL = 1e-6
# Above this many integer columns "auto" hands the model to HiGHS'
# branch-and-cut: plain LP branching cannot close the big-M gap there.
AUTO_BNB_MAX_INTEGERS = 200
METHODS = ("auto", "bnb", "highs")


class _Relaxation:
    def __init__(self, model: MilpModel, integral: bool = False):
        c, A, rlo, rhi, clo, chi, is_int = model.arrays()
        self.n = len(c)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = c
        inf = highspy.kHighsInf
        lp.col_lower_ = np.where(np.isfinite(clo), clo, -inf)
        lp.col_upper_ = np.where(np.isfinite(chi), chi, inf)
        lp.row_lower_ = np.where(np.isfinite(rlo), rlo, -inf)
        lp.row_upper_ = np.where(np.isfinite(rhi), rhi, inf)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        lp.a_matrix_.num_col_ = self.n
        lp.a_matrix_.num_row_ = A.shape[0]
        lp.sense_ = highspy.ObjSense.kMaximize
        if integral:
            lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous for f in is_int]
        h.passModel(lp)
        self.h = h
        self.lo = np.array(lp.col_lower_, dtype=float)
        self.hi = np.array(lp.col_upper_, dtype=float)

    def set_bounds(self, lo: np.ndarray, hi: np.ndarray) -> None:
        diff = np.flatnonzero((lo != self.lo) | (hi != self.hi))
        if diff.size:
            self.h.changeColsBounds(diff.size, diff.astype(np.int32), lo[diff], hi[diff])
            self.lo[diff] = lo[diff]
            self.hi[diff] = hi[diff]

    def solve(self):
        self.h.run()
        status = self.h.getModelStatus()
        if status == highspy.HighsModelStatus.kOptimal:
            x = np.array(self.h.getSolution().col_value)
            return "optimal", x, self.h.getInfo().objective_function_value
        if status == highspy.HighsModelStatus.kInfeasible:
            return "infeasible", None, None
        if status in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
            return "unbounded", None, None
        # numerical trouble: retry once from scratch
        self.h.clearSolver()
        self.h.run()
        if self.h.getModelStatus() == highspy.HighsModelStatus.kOptimal:
            x = np.array(self.h.getSolution().col_value)
            return "optimal", x, self.h.getInfo().objective_function_value
        return "infeasible", None, None


def _label_rank(model: MilpModel) -> np.ndarray:
    order = sorted(range(model.n_vars), key=lambda j: model.variables[j].label)
    rank = np.empty(model.n_vars, dtype=np.int64)
    rank[order] = np.arange(model.n_vars)
    return rank


def solve_exact(
    model: MilpModel,
    time_limit: Optional[float] = 300.0,
    node_limit: Optional[int] = None,
    method: str = "auto",
    incumbent: Optional[np.ndarray] = None,
) -> Solution:
    """Solve ``model`` to proven optimality within the given budget.

    ``method="bnb"`` runs the branch and bound in this module;
    ``method="highs"`` hands the whole MILP to HiGHS' branch-and-cut;
    ``method="auto"`` picks ``bnb`` up to ``AUTO_BNB_MAX_INTEGERS`` integer
    columns and ``highs`` beyond.  A feasible ``incumbent`` vector, if
    given, seeds the search.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "bnb" if len(model.integer_indices) <= AUTO_BNB_MAX_INTEGERS else "highs"
    if model.n_vars == 0:
        return Solution(Status.OPTIMAL, np.zeros(0), 0.0, bound=0.0, nodes=0, runtime=0.0, solver=method)
    if method == "highs":
        return _solve_highs(model, time_limit, incumbent)
    start = time.perf_counter()
    _, _, _, _, clo, chi, is_int = model.arrays()
    int_idx = np.flatnonzero(is_int)
    rank = _label_rank(model)
    root_lo = clo.copy()
    root_hi = chi.copy()
    root_lo[int_idx] = np.ceil(root_lo[int_idx] - INT_TOL)
    root_hi[int_idx] = np.floor(root_hi[int_idx] + INT_TOL)
    if np.any(root_lo > root_hi):
        return Solution(Status.INFEASIBLE, None, None, nodes=0, runtime=time.perf_counter() - start)

    relax = _Relaxation(model)
    best_x: Optional[np.ndarray] = None
    best_obj = -math.inf
    history: list[tuple[int, float]] = []
    if incumbent is not None:
        inc = np.asarray(incumbent, dtype=float)
        if not model.violations(inc):
            best_x, best_obj = inc.copy(), model.objective_value(inc)
            history.append((0, best_obj))
        else:
            log.warning("ignoring infeasible incumbent (%d violations)", len(model.violations(inc)))

    seq = 0
    heap: list = []  # (-bound, seq, changes)
    nodes = 0
    current: Optional[tuple] = ((), math.inf)
    timed_out = False

    def apply(changes):
        lo, hi = root_lo.copy(), root_hi.copy()
        for j, l, u in changes:
            lo[j], hi[j] = l, u
        relax.set_bounds(lo, hi)

    while True:
        if current is None:
            while heap and -heap[0][0] <= best_obj + OBJ_TOL:
                heapq.heappop(heap)
            if not heap:
                break
            negb, _, changes = heapq.heappop(heap)
            current = (changes, -negb)
        changes, parent_bound = current
        current = None
        if parent_bound <= best_obj + OBJ_TOL:
            continue
        if (time_limit is not None and time.perf_counter() - start > time_limit) or (node_limit is not None and nodes >= node_limit):
            heapq.heappush(heap, (-parent_bound, seq, changes))
            seq += 1
            timed_out = True
            break
        apply(changes)
        status, x, obj = relax.solve()
        nodes += 1
        if status == "unbounded":
            if nodes == 1:
                raise UnboundedError("LP relaxation is unbounded")
            continue
        if status != "optimal" or obj <= best_obj + OBJ_TOL:
            continue
        xi = x[int_idx]
        frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        frac_mask = frac > INT_TOL
        if not frac_mask.any():
            x = x.copy()
            x[int_idx] = np.round(xi)
            best_x, best_obj = x, model.objective_value(x)
            history.append((nodes, best_obj))
            log.debug("node %d: incumbent %.6f", nodes, best_obj)
            continue
        cand = int_idx[frac_mask]
        cfrac = frac[frac_mask]
        top = cfrac.max()
        ties = cand[cfrac >= top - 1e-9]
        j = int(ties[np.argmin(rank[ties])])
        v = x[j]
        lo_j = relax.lo[j]
        hi_j = relax.hi[j]
        down = changes + ((j, lo_j, math.floor(v)),)
        up = changes + ((j, math.ceil(v), hi_j),)
        heapq.heappush(heap, (-obj, seq, down))
        seq += 1
        current = (up, obj)

    runtime = time.perf_counter() - start
    open_bound = max([-b for b, _, _ in heap], default=-math.inf)
    if best_x is None:
        status = Status.TIME_LIMIT if timed_out else Status.INFEASIBLE
        return Solution(status, None, None, bound=None if not timed_out else open_bound, nodes=nodes, runtime=runtime, incumbents=history)
    bound = max(best_obj, open_bound)
    status = Status.FEASIBLE if timed_out and bound > best_obj + OBJ_TOL else Status.OPTIMAL
    return Solution(status, best_x, best_obj, bound=bound, nodes=nodes, runtime=runtime, solver="bnb", incumbents=history)


def _solve_highs(model: MilpModel, time_limit: Optional[float], incumbent: Optional[np.ndarray] = None) -> Solution:
    start = time.perf_counter()
    relax = _Relaxation(model, integral=True)
    h = relax.h
    if incumbent is not None:
        sol = highspy.HighsSolution()
        sol.col_value = list(np.asarray(incumbent, dtype=float))
        sol.value_valid = True
        h.setSolution(sol)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", OBJ_TOL)
    h.setOptionValue("mip_feasibility_tolerance", 1e-7)
    h.setOptionValue("threads", 1)
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    runtime = time.perf_counter() - start
    has_sol = info.primal_solution_status == 2
    x = np.array(h.getSolution().col_value) if has_sol else None
    if x is not None:
        int_idx = model.integer_indices
        x[int_idx] = np.round(x[int_idx])
    obj = model.objective_value(x) if x is not None else None
    bound = info.mip_dual_bound if math.isfinite(info.mip_dual_bound) else None
    nodes = int(info.mip_node_count)
    if status == highspy.HighsModelStatus.kOptimal:
        st = Status.OPTIMAL
    elif status == highspy.HighsModelStatus.kInfeasible:
        st = Status.INFEASIBLE
    elif status in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
        raise UnboundedError("model is unbounded")
    else:
        st = Status.FEASIBLE if x is not None else Status.TIME_LIMIT
    return Solution(st, x, obj, bound=bound, nodes=nodes, runtime=runtime, solver="highs")
