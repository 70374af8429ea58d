"""Plan feasibility checks and an exhaustive optimum for tiny instances.

Nothing here reads a MILP: the checks work from the instance data and the
plan's routes alone, which is what makes them useful against every solver
path in the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .core import TIME_TOL, Instance, Plan

ORACLE_MAX_ASSETS = 7
ORACLE_MAX_VEHICLES = 3
ORACLE_MAX_SCENARIOS = 3


@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    detail: str
    magnitude: float = 1.0

    def __str__(self):
        return f"{self.code} at {self.location}: {self.detail} (by {self.magnitude:.6g})"


def _vname(v) -> str:
    return f"vehicle {v[0]}.{v[1]}"


def check(instance: Instance, plan: Plan, tol: float = TIME_TOL) -> list[Violation]:
    """Every constraint ``plan`` breaks, as :class:`Violation` records."""
    out: list[Violation] = []

    def bad(code, where, detail, mag=1.0):
        if mag > 0:
            out.append(Violation(code, where, detail, float(mag)))

    n, end = instance.n, instance.end_node
    ST = instance.scenarios.occurrence_times[0]
    fleet = instance.fleet
    known = set(fleet.vehicles())
    vehicles = list(plan.vehicles)
    for v in vehicles:
        if v not in known:
            bad("CAPACITY", _vname(v), "vehicle not in the fleet")
    for q in fleet.vehicle_types:
        used = sum(1 for v in vehicles if v[0] == q)
        if used > fleet.counts[q - 1]:
            bad("CAPACITY", f"type {q}", f"{used} vehicles, fleet has {fleet.counts[q - 1]}", used - fleet.counts[q - 1])
    if len(set(vehicles)) != len(vehicles):
        bad("FLOW", "plan", "duplicate vehicle identities")

    W1 = instance.windows.stage1

    def leg(where, v, prev, prev_ready, node, s):
        q = v[0]
        if not 1 <= node <= n:
            bad("FLOW", where, f"visit to non-asset node {node}")
            return None
        arrive = prev_ready + instance.t(prev, node, q)
        bad("TRAVEL_TIME", where, f"starts at {s:.6f} before arrival {arrive:.6f}", arrive - s - tol)
        return s + instance.service(node)

    # stage 1
    stage1_visits: dict[int, list] = {}
    last_time: dict = {}
    for v in vehicles:
        route = plan.stage1_routes.get(v, ())
        prev, ready, seen = 0, 0.0, set()
        for node, s in route:
            where = f"{_vname(v)}, stage 1, asset {node}"
            nxt = leg(where, v, prev, ready, node, s)
            if nxt is None:
                break
            if node in seen:
                bad("DOUBLE_SERVICE", where, "vehicle visits the asset twice")
            seen.add(node)
            if node not in W1:
                bad("WINDOW", where, "asset has no stage-1 window")
            else:
                o, c = W1[node]
                bad("WINDOW", where, f"start {s:.6f} outside [{o}, {c}]", max(o - s, s - c) - tol)
            bad("STAGING_TIME", where, f"service ends at {nxt:.6f} after the staging time {ST}", nxt - ST - tol)
            stage1_visits.setdefault(node, []).append((v, s))
            prev, ready = node, nxt
        stage_node = route[-1][0] if route else 0
        last_time[v] = route[-1][1] if route else 0.0
        if plan.staging_nodes.get(v, 0) != stage_node:
            bad("FLOW", _vname(v), f"staging node {plan.staging_nodes.get(v)} is not the last stage-1 node {stage_node}")

    def sync(visits: dict, served: frozenset, ctx: str):
        for node in sorted(set(visits) | set(served)):
            where = f"{ctx}, asset {node}"
            vs = visits.get(node, [])
            if node not in served:
                bad("SYNC", where, "visited but not flagged as serviced")
                continue
            if not 1 <= node <= n:
                bad("SYNC", where, "serviced flag for unknown asset")
                continue
            req = instance.asset(node).requirements
            for q in fleet.vehicle_types:
                got = sum(1 for v, _ in vs if v[0] == q)
                if got != req[q - 1]:
                    bad("SYNC", where, f"type {q}: {got} vehicles, requires {req[q - 1]}", abs(got - req[q - 1]))
            if vs:
                times = [s for _, s in vs]
                bad("SYNC", where, "vehicles start service at different times", max(times) - min(times) - tol)

    sync(stage1_visits, plan.serviced_stage1, "stage 1")

    # stage 2
    for xi in instance.scenarios.ids:
        W2 = instance.windows.scenario(xi)
        routes = plan.stage2_routes[xi - 1]
        visits: dict[int, list] = {}
        departures = {q: 0 for q in fleet.vehicle_types}
        for v in vehicles:
            route = routes.get(v, ())
            stage_node = plan.staging_nodes.get(v, 0)
            if not route:
                bad("HANDOFF", f"{_vname(v)}, scenario {xi}", "stage-2 route is empty; it must start at the staging node")
                continue
            node0, t0 = route[0]
            if node0 != stage_node:
                bad("HANDOFF", f"{_vname(v)}, scenario {xi}", f"starts at {node0}, staging node is {stage_node}")
            bad("HANDOFF", f"{_vname(v)}, scenario {xi}", f"start time {t0} differs from stage-1 time {last_time.get(v, 0.0)}", abs(t0 - last_time.get(v, 0.0)) - tol)
            prev = stage_node
            ready = last_time.get(v, 0.0) + instance.service(stage_node) if stage_node else 0.0
            seen = {node for node, _ in plan.stage1_routes.get(v, ())}
            for node, s in route[1:]:
                where = f"{_vname(v)}, scenario {xi}, asset {node}"
                nxt = leg(where, v, prev, ready, node, s)
                if nxt is None:
                    break
                if node in seen:
                    bad("DOUBLE_SERVICE", where, "vehicle visits the asset twice")
                seen.add(node)
                if node not in W2:
                    bad("WINDOW", where, f"asset has no window in scenario {xi}")
                else:
                    o, c = W2[node]
                    bad("WINDOW", where, f"start {s:.6f} outside [{o}, {c}]", max(o - s, s - c) - tol)
                bad("STAGING_TIME", where, f"service ends at {nxt:.6f} before the staging time {ST}", ST - nxt - tol)
                visits.setdefault(node, []).append((v, s))
                prev, ready = node, nxt
            if len(route) > 1 and stage_node == 0:
                departures[v[0]] += 1
        for v in vehicles:
            if plan.stage1_routes.get(v):
                departures[v[0]] += 1
        for q, k in departures.items():
            avail = fleet.depot_availability[q - 1]
            bad("CAPACITY", f"type {q}, scenario {xi}", f"{k} depot departures, {avail} stationed", k - avail)
        sync(visits, plan.serviced_stage2[xi - 1], f"scenario {xi}")
        for node in sorted(plan.serviced_stage1 & plan.serviced_stage2[xi - 1]):
            bad("DOUBLE_SERVICE", f"asset {node}", f"serviced in stage 1 and in scenario {xi}")
    return out


# --- exhaustive oracle ----------------------------------------------------


class OracleLimitError(ValueError):
    pass


def brute_force_optimum(instance: Instance, tol: float = TIME_TOL) -> float:
    """Best expected value by exhaustive search over service sequences.

    A service event picks an asset and exactly the vehicles it requires;
    service starts at the earliest moment all of them can be there, inside
    the window.  Every stage-1 sequence is enumerated, and each scenario's
    best continuation from the resulting vehicle positions is found by the
    same search.
    """
    n = instance.n
    total_vehicles = sum(instance.fleet.counts)
    F = instance.scenarios.n_scenarios
    if n > ORACLE_MAX_ASSETS or total_vehicles > ORACLE_MAX_VEHICLES or F > ORACLE_MAX_SCENARIOS:
        raise OracleLimitError(
            f"oracle limited to n <= {ORACLE_MAX_ASSETS}, vehicles <= {ORACLE_MAX_VEHICLES}, scenarios <= {ORACLE_MAX_SCENARIOS}"
        )
    W1 = dict(instance.windows.stage1)
    W2 = [dict(instance.windows.scenario(xi)) for xi in instance.scenarios.ids]
    for i in W1:
        if any(i in w for w in W2):
            raise OracleLimitError(f"asset {i} has windows in both stages; not supported by the oracle")
    ST = instance.scenarios.occurrence_times[0]
    kappa = instance.fleet.counts
    # only vehicles stationed at the depot can ever move
    types = tuple(q for q in instance.fleet.vehicle_types for _ in range(instance.fleet.depot_availability[q - 1]))
    groups = {q: [k for k, qq in enumerate(types) if qq == q] for q in set(types)}
    a = {i: instance.service(i) for i in range(n + 2)}
    value = {i: instance.asset(i).value for i in range(1, n + 1)}
    req = {i: instance.asset(i).requirements for i in range(1, n + 1)}
    t = instance.travel.times

    def canon(state):
        # vehicles of one type are interchangeable
        out = list(state)
        for idx in groups.values():
            vals = sorted(state[k] for k in idx)
            for k, v in zip(idx, vals):
                out[k] = v
        return tuple(out)

    def events(state, windows, served, stage2):
        for j in sorted(windows):
            if j in served:
                continue
            r = req[j]
            if any(r[q - 1] > kappa[q - 1] for q in instance.fleet.vehicle_types):
                continue
            choices = []
            for q in instance.fleet.vehicle_types:
                idx = groups.get(q, [])
                if r[q - 1] > len(idx):
                    break
                choices.append(list(itertools.combinations(idx, r[q - 1])))
            else:
                o, c = windows[j]
                for combo in itertools.product(*choices):
                    chosen = [k for part in combo for k in part]
                    if not chosen:
                        continue
                    s = o
                    if stage2:
                        s = max(s, ST - a[j])
                    for k in chosen:
                        node, ready = state[k]
                        s = max(s, ready + t[types[k] - 1, node, j])
                    if s > c + tol:
                        continue
                    if not stage2 and s + a[j] > ST + tol:
                        continue
                    new = list(state)
                    for k in chosen:
                        new[k] = (j, s + a[j])
                    yield j, canon(tuple(new))

    @lru_cache(maxsize=None)
    def best2(xi, served, state):
        best = 0.0
        for j, new in events(state, W2[xi - 1], served, True):
            best = max(best, value[j] + best2(xi, served | frozenset([j]), new))
        return best

    probs = instance.scenarios.probabilities
    start = canon(tuple((0, 0.0) for _ in types))
    seen = set()
    best = 0.0
    stack = [(frozenset(), start)]
    while stack:
        served, state = stack.pop()
        if (served, state) in seen:
            continue
        seen.add((served, state))
        v1 = sum(value[i] for i in served)
        total = v1 + sum(p * best2(xi, frozenset(), state) for xi, p in zip(instance.scenarios.ids, probs) if p > 0)
        best = max(best, total)
        for j, new in events(state, W1, served, False):
            stack.append((served | frozenset([j]), new))
    best2.cache_clear()
    return best
