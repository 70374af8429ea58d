"""Deterministic single-stage model and the dynamic-rerouting baseline.

The rerouting baseline plans as if the most probable scenario will happen,
then, once the wind change is known, re-optimises the other scenario's
assets from wherever the vehicles are at the staging time.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .core import TIME_TOL, Evaluation, Instance, Plan, Vehicle, evaluate
from .milp.bnb import solve_exact
from .milp.model import MilpModel, Sense, Solution, Status, VarKind
from .stochastic import ExtractionError, _strip, removed_assets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Origin:
    """Where a group of vehicles starts: ``node`` at time ``release``."""

    node: int
    release: float
    vehicles: tuple[Vehicle, ...]


@dataclass
class DeterministicHandle:
    model: MilpModel
    instance: Instance
    assets: tuple[int, ...]
    windows: Mapping[int, tuple[float, float]]
    origins: tuple[Origin, ...]
    Y: dict = field(default_factory=dict)
    X: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    S: dict = field(default_factory=dict)

    def origin_label(self, k: int) -> str:
        o = self.origins[k]
        if len(self.origins) == 1 and o.node == 0 and o.release == 0.0:
            return "0"
        return f"o{k}"


def depot_origins(instance: Instance) -> tuple[Origin, ...]:
    avail = instance.fleet.depot_availability
    vs = tuple(v for v in instance.fleet.vehicles() if v[1] <= avail[v[0] - 1])
    return (Origin(0, 0.0, vs),)


def build_deterministic(
    instance: Instance,
    assets: Sequence[int],
    windows: Mapping[int, tuple[float, float]],
    origins: Optional[Sequence[Origin]] = None,
    name: str = "deterministic",
) -> DeterministicHandle:
    """Single-stage model over ``assets`` with one window each.

    ``origins`` generalises the start depot: vehicles of each origin leave
    its node no earlier than its release time.  Origins are encoded as
    negative node ids ``-1, -2, ...`` in the flow maps.
    """
    origins = tuple(origins) if origins is not None else depot_origins(instance)
    removed = removed_assets(instance)
    assets = tuple(sorted(i for i in set(assets) if i in windows and i not in removed))
    end = instance.end_node
    m = MilpModel(name, config={"T_max": instance.windows.horizon})
    h = DeterministicHandle(m, instance, assets, dict(windows), origins)
    Q = instance.fleet.vehicle_types
    kappa = instance.fleet.counts

    def req(i, q):
        return instance.asset(i).requirements[q - 1]

    supply = [{q: sum(1 for v in o.vehicles if v[0] == q) for q in Q} for o in origins]

    for i in assets:
        h.Y[i] = m.add_var(f"Y[{i}]", VarKind.BINARY)
    for i in assets:
        o, c = windows[i]
        h.S[i] = m.add_var(f"S[{i}]", VarKind.CONTINUOUS, o, c)

    def reach(ready, frm, j, q):
        return ready + instance.t(frm, j, q) <= windows[j][1] + TIME_TOL

    for q in Q:
        for j in assets:
            if req(j, q) == 0:
                continue
            for k, org in enumerate(origins):
                if supply[k][q] and reach(org.release, org.node, j, q):
                    u = min(kappa[q - 1], supply[k][q], req(j, q))
                    lab = h.origin_label(k)
                    h.X[-1 - k, j, q] = m.add_var(f"X[{lab},{j},{q}]", VarKind.INTEGER, 0, u)
                    h.z[-1 - k, j, q] = m.add_var(f"z[{lab},{j},{q}]", VarKind.BINARY)
            for i in assets:
                if i != j and req(i, q) and reach(windows[i][0] + instance.service(i), i, j, q):
                    u = min(kappa[q - 1], req(i, q), req(j, q))
                    h.X[i, j, q] = m.add_var(f"X[{i},{j},{q}]", VarKind.INTEGER, 0, u)
                    h.z[i, j, q] = m.add_var(f"z[{i},{j},{q}]", VarKind.BINARY)
        for i in assets:
            if req(i, q):
                h.X[i, end, q] = m.add_var(f"X[{i},{end},{q}]", VarKind.INTEGER, 0, min(kappa[q - 1], req(i, q)))

    # protected value
    m.set_objective({h.Y[i]: instance.asset(i).value for i in assets})

    ins: dict = {}
    outs: dict = {}
    for (i, j, q), x in h.X.items():
        outs.setdefault((i, q), []).append(x)
        ins.setdefault((j, q), []).append(x)

    for q in Q:
        dep = [x for k in range(len(origins)) for x in outs.get((-1 - k, q), [])]
        arr = ins.get((end, q), [])
        # depot balance
        if dep or arr:
            m.add_constraint([(x, 1.0) for x in dep] + [(x, -1.0) for x in arr], Sense.EQ, 0.0, f"depot_balance[{q}]")
        # start supply, the single-stage counterpart of the depot cap
        for k in range(len(origins)):
            row = outs.get((-1 - k, q), [])
            if row:
                m.add_constraint([(x, 1.0) for x in row], Sense.LE, supply[k][q], f"supply[{h.origin_label(k)},{q}]")
        for j in assets:
            # flow conservation
            a_in, a_out = ins.get((j, q), []), outs.get((j, q), [])
            if a_in or a_out:
                m.add_constraint([(x, 1.0) for x in a_in] + [(x, -1.0) for x in a_out], Sense.EQ, 0.0, f"flow[{j},{q}]")
            # synchronised arrivals
            if req(j, q):
                m.add_constraint([(x, 1.0) for x in a_in] + [(h.Y[j], -req(j, q))], Sense.EQ, 0.0, f"sync[{j},{q}]")
    # arc indicators and timing
    for (i, j, q), z in h.z.items():
        x = h.X[i, j, q]
        m.add_constraint([(x, 1.0), (z, -m.variables[x].upper)], Sense.LE, 0.0, f"link[{i},{j},{q}]")
        sj_lo = m.variables[h.S[j]].lower
        if i < 0:
            org = origins[-1 - i]
            t = instance.t(org.node, j, q)
            M = max(0.0, org.release + t - sj_lo)
            m.add_constraint([(h.S[j], -1.0), (z, M)], Sense.LE, M - org.release - t, f"time[{h.origin_label(-1 - i)},{j},{q}]")
        else:
            t = instance.t(i, j, q)
            a = instance.service(i)
            M = max(0.0, m.variables[h.S[i]].upper + a + t - sj_lo)
            m.add_constraint([(h.S[i], 1.0), (h.S[j], -1.0), (z, M)], Sense.LE, M - t - a, f"time[{i},{j},{q}]")
    m.freeze()
    return h


def deterministic_routes(handle: DeterministicHandle, solution: Solution) -> tuple[dict, frozenset]:
    """Per-vehicle ``[(asset, start), ...]`` and the serviced set."""
    if solution.values is None:
        raise ExtractionError(f"solution has no values (status {solution.status})")
    x = solution.values
    inst = handle.instance
    S = {i: float(x[k]) for i, k in handle.S.items()}
    served = frozenset(i for i, k in handle.Y.items() if x[k] > 0.5)
    routes = {}
    for q in inst.fleet.vehicle_types:
        flows = {(i, j): float(x[k]) for (i, j, qq), k in handle.X.items() if qq == q}
        starts = {}
        for k, org in enumerate(handle.origins):
            vs = [v for v in org.vehicles if v[0] == q]
            n_out = sum(int(round(f)) for (i, _), f in flows.items() if i == -1 - k)
            for v in vs[:n_out]:
                starts[v] = -1 - k
        paths = _strip(starts, flows, S, inst.end_node)
        for v, path in paths.items():
            routes[v] = [(i, S[i]) for i in path[1:] if i != inst.end_node]
    for org in handle.origins:
        for v in org.vehicles:
            routes.setdefault(v, [])
    return routes, served


# --- staging positions ----------------------------------------------------


def staging_positions(routes: Mapping[Vehicle, Sequence[tuple[int, float]]], instance: Instance, stage1_assets, staging_time: Optional[float] = None) -> dict:
    """Where each vehicle is at the staging time.

    ``i`` is the last node whose service finished by ``ST`` (the depot if
    none) and ``j`` the next planned node.  If the vehicle can reach ``j``
    by ``ST`` it is staged at ``j``; otherwise it is staged at ``i``, and if
    it already left ``i`` before ``ST`` it is released only when it would
    have reached ``j``.  Returns vehicle -> ``(node, release)`` plus the
    stage-1 prefix used.
    """
    ST = instance.scenarios.staging_time if staging_time is None else staging_time
    out = {}
    for v, route in routes.items():
        q = v[0]
        prefix = [(i, s) for i, s in route if i in stage1_assets and s + instance.service(i) <= ST + TIME_TOL]
        rest = route[len(prefix):]
        if prefix:
            i, s = prefix[-1]
            d = s + instance.service(i)
        else:
            i, d = 0, 0.0
        if not rest:
            out[v] = (i, ST, tuple(prefix))
            continue
        j = rest[0][0]
        arrive = d + instance.t(i, j, q)
        if arrive <= ST + TIME_TOL:
            out[v] = (j, ST, tuple(prefix))
        elif d < ST - TIME_TOL:
            out[v] = (i, arrive, tuple(prefix))
        else:
            out[v] = (i, ST, tuple(prefix))
    return out


# --- dynamic rerouting ---------------------------------------------------


@dataclass
class ReroutingResult:
    plan: Plan
    evaluation: Evaluation
    expected_value: float
    literal_value: float
    planned_scenario: int
    tie_break: bool
    N_a: tuple[int, ...]
    N_b: tuple[int, ...]
    visited: frozenset
    staging: dict
    runtime: float
    statuses: tuple[str, str]


def dynamic_reroute(
    instance: Instance,
    *,
    time_limit: Optional[float] = 300.0,
    method: str = "auto",
    accounting: str = "realized",
) -> ReroutingResult:
    """Two-solve rerouting policy and its expected protected value.

    ``accounting="realized"`` credits each scenario only with services that
    actually happen in it; ``"literal"`` sums values over the visited set
    exactly as the published pseudocode does, which credits an asset hit in
    both scenarios with its full value whenever the first solve visits it.
    The plan and its evaluation always follow the realized reading.
    """
    if instance.scenarios.n_scenarios != 2:
        raise ValueError("dynamic rerouting is defined for exactly two scenarios")
    if accounting not in ("realized", "literal"):
        raise ValueError("accounting must be 'realized' or 'literal'")
    start = time.perf_counter()
    P1, P2 = instance.scenarios.probabilities
    tie = P1 == P2
    a, b = (1, 2) if P1 >= P2 else (2, 1)
    W1 = instance.windows.stage1
    Wa = instance.windows.scenario(a)
    Wb = instance.windows.scenario(b)
    Nf = set(W1)
    windows_a = {**{i: w for i, w in Wa.items()}, **dict(W1)}
    N_a = tuple(sorted(Nf | set(Wa)))
    N_b = tuple(sorted(Wb))

    h1 = build_deterministic(instance, N_a, windows_a, name="reroute_first")
    s1 = solve_exact(h1.model, time_limit=time_limit, method=method)
    if s1.values is None:
        raise RuntimeError(f"first rerouting solve failed: {s1.status.value}")
    routes1, served1 = deterministic_routes(h1, s1)
    staging = staging_positions(routes1, instance, Nf)

    prefix_served = frozenset(i for i in served1 if i in Nf)
    visited_literal = set(served1)
    # realized: only stage-1 services carry over into the other scenario
    excluded = set(prefix_served) if accounting == "realized" else set(served1)
    groups: dict = {}
    for v, (node, rel, _) in sorted(staging.items()):
        groups.setdefault((node, rel), []).append(v)
    origins = tuple(Origin(node, rel, tuple(vs)) for (node, rel), vs in sorted(groups.items()))
    remaining = [i for i in N_b if i not in excluded]
    h2 = build_deterministic(instance, remaining, Wb, origins, name="reroute_second")
    s2 = solve_exact(h2.model, time_limit=time_limit, method=method)
    if s2.values is None:
        raise RuntimeError(f"second rerouting solve failed: {s2.status.value}")
    routes2, served2 = deterministic_routes(h2, s2)
    visited_literal |= served2

    # stochastic plan: stage 1 is the common prefix
    vehicles = tuple(instance.fleet.vehicles())
    stage1_routes, staging_nodes, cont_a, cont_b = {}, {}, {}, {}
    for v in vehicles:
        prefix = staging[v][2] if v in staging else ()
        stage1_routes[v] = tuple(prefix)
        node = prefix[-1][0] if prefix else 0
        staging_nodes[v] = node
        first = (node, prefix[-1][1] if prefix else 0.0)
        after = [x for x in routes1.get(v, []) if x not in prefix]
        cont_a[v] = (first, *after)
        cont_b[v] = (first, *routes2.get(v, []))
    served_a = frozenset(i for i in served1 if i not in Nf)
    stage2 = [None, None]
    serviced2 = [None, None]
    stage2[a - 1], serviced2[a - 1] = cont_a, served_a
    stage2[b - 1], serviced2[b - 1] = cont_b, frozenset(served2)
    plan = Plan(vehicles, stage1_routes, staging_nodes, tuple(stage2), prefix_served, tuple(serviced2))
    ev = evaluate(instance, plan)

    value = {i: instance.asset(i).value for i in range(1, instance.n + 1)}
    literal = 0.0
    for i in visited_literal:
        if i in Nf:
            literal += value[i]
        if i in instance.windows.scenario(1):
            literal += P1 * value[i]
        if i in instance.windows.scenario(2):
            literal += P2 * value[i]
    runtime = time.perf_counter() - start
    return ReroutingResult(
        plan=plan,
        evaluation=ev,
        expected_value=ev.expected_total if accounting == "realized" else literal,
        literal_value=literal,
        planned_scenario=a,
        tie_break=tie,
        N_a=N_a,
        N_b=N_b,
        visited=frozenset(visited_literal),
        staging={v: (node, rel) for v, (node, rel, _) in staging.items()},
        runtime=runtime,
        statuses=(s1.status.value, s2.status.value),
    )
