"""Estimator-style wrappers around the two planning pipelines.

``fit`` takes an :class:`~assetprot.core.Instance` (not a feature matrix)
and solves it; fitted attributes carry the trailing underscore.
"""

from __future__ import annotations

from typing import Optional

from sklearn.base import BaseEstimator

from .core import Instance, evaluate
from .milp.bnb import solve_exact
from .milp.lpformat import solve_external


class TwoStagePlanner(BaseEstimator):
    """Optimal two-stage plan.

    ``model`` is ``"two_stage"`` or ``"multi"`` (shared-prefix coupling for
    more than two scenarios); ``solver`` is ``"auto"``, ``"bnb"``,
    ``"highs"`` or ``"external"``.
    """

    def __init__(self, model: str = "two_stage", solver: str = "auto", time_limit: Optional[float] = 300.0, warm_start: bool = True):
        self.model = model
        self.solver = solver
        self.time_limit = time_limit
        self.warm_start = warm_start

    def fit(self, instance: Instance, y=None):
        from .multiscenario import build_multi
        from .stochastic import assignment_from_plan, build, extract_plan

        if self.model not in ("two_stage", "multi"):
            raise ValueError(f"unknown model {self.model!r}")
        handle = build_multi(instance) if self.model == "multi" else build(instance)
        incumbent = None
        if self.warm_start and instance.scenarios.n_scenarios == 2 and self.solver != "external":
            from .rerouting import dynamic_reroute

            incumbent = assignment_from_plan(handle, dynamic_reroute(instance, time_limit=self.time_limit, method=self.solver).plan)
        if self.solver == "external":
            sol = solve_external(handle.model, time_limit=self.time_limit)
        else:
            sol = solve_exact(handle.model, time_limit=self.time_limit, method=self.solver, incumbent=incumbent)
        if sol.values is None:
            raise RuntimeError(f"no solution: {sol.status.value}")
        self.handle_ = handle
        self.solution_ = sol
        self.status_ = sol.status.value
        self.plan_ = extract_plan(handle, sol)
        self.evaluation_ = evaluate(instance, self.plan_)
        self.objective_ = sol.objective
        return self

    def score(self, instance: Instance, y=None) -> float:
        """Expected protected value of the fitted plan on ``instance``."""
        return evaluate(instance, self.plan_).expected_total


class ReroutingPlanner(BaseEstimator):
    """Plan-for-the-likely-scenario baseline with one replan at the staging time."""

    def __init__(self, solver: str = "auto", time_limit: Optional[float] = 300.0, accounting: str = "realized"):
        self.solver = solver
        self.time_limit = time_limit
        self.accounting = accounting

    def fit(self, instance: Instance, y=None):
        from .rerouting import dynamic_reroute

        res = dynamic_reroute(instance, time_limit=self.time_limit, method=self.solver, accounting=self.accounting)
        self.result_ = res
        self.plan_ = res.plan
        self.evaluation_ = res.evaluation
        self.objective_ = res.expected_value
        return self

    def score(self, instance: Instance, y=None) -> float:
        return evaluate(instance, self.plan_).expected_total
