"""Two-stage stochastic asset protection MILP.

Stage 1 covers services that finish before the staging time ``ST``.  Every
scenario ``xi`` then has its own stage-2 routes, which start from where the
vehicles were left at ``ST`` (a *staging node*, or the start depot for
vehicles that never left it).

Node and label conventions::

    Y_f[i]          Y_s[i,xi]          service indicators
    X_f[i,j,q]      X_s[i,j,q,xi]      integer arc flows per vehicle type
    z_f[i,j,q]      z_s[i,j,q,xi]      arc-use indicators
    S_f[i]          S_s[i,xi]          service start times
    w[i]                               staging-node indicator
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import TIME_TOL, Instance, Plan
from .milp.model import MilpModel, Sense, Solution, VarKind

log = logging.getLogger(__name__)


class ExtractionError(RuntimeError):
    """Solution flows could not be decomposed into vehicle routes."""


@dataclass(frozen=True)
class ArcSets:
    """Feasible arcs per vehicle type and context.

    ``stage1[q]`` and ``stage2[xi - 1][q]`` are tuples of ``(i, j)`` pairs.
    ``removed`` holds assets whose requirements exceed the fleet.
    """

    stage1: Mapping[int, tuple[tuple[int, int], ...]]
    stage2: tuple[Mapping[int, tuple[tuple[int, int], ...]], ...]
    stage1_nodes: frozenset
    stage2_nodes: tuple[frozenset, ...]
    removed: frozenset
    _out: dict = field(default_factory=dict, compare=False, repr=False)
    _in: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for ctx, per_q in [(0, self.stage1)] + list(enumerate(self.stage2, start=1)):
            for q, arcs in per_q.items():
                for i, j in arcs:
                    self._out.setdefault((ctx, q, i), []).append(j)
                    self._in.setdefault((ctx, q, j), []).append(i)

    def successors(self, ctx: int, q: int, i: int) -> list[int]:
        """Heads of arcs leaving ``i``; ``ctx`` is 0 for stage 1, else the scenario."""
        return self._out.get((ctx, q, i), [])

    def predecessors(self, ctx: int, q: int, j: int) -> list[int]:
        return self._in.get((ctx, q, j), [])

    def count(self) -> int:
        return sum(len(a) for a in self.stage1.values()) + sum(len(a) for per in self.stage2 for a in per.values())

    def count_by_type(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for per_q in [self.stage1, *self.stage2]:
            for q, arcs in per_q.items():
                out[q] += len(arcs)
        return dict(out)

    @property
    def is_empty(self) -> bool:
        return self.count() == 0


def removed_assets(instance: Instance) -> frozenset:
    kappa = instance.fleet.counts
    return frozenset(a.id for a in instance.assets if any(r > k for r, k in zip(a.requirements, kappa)))


def preprocess(instance: Instance) -> ArcSets:
    """Drop arcs that can never be used in a feasible plan.

    An arc ``(i, j)`` survives for type ``q`` only if both endpoints need
    type ``q`` (or are depots), both have a window in the arc's context and
    ``o_i + a_i + t_ijq <= c_j``.  Stage-2 arcs may leave from the start
    depot, from any stage-1 asset (a potential staging node) or from another
    asset of the same scenario, and every asset of the context may close its
    route at the end depot.
    """
    removed = removed_assets(instance)
    end = instance.end_node
    w1 = {i: w for i, w in instance.windows.stage1.items() if i not in removed}
    w2 = [{i: w for i, w in instance.windows.scenario(xi).items() if i not in removed} for xi in instance.scenarios.ids]

    def needs(i, q):
        return instance.asset(i).requirements[q - 1] > 0

    def reach(i, oi, j, cj, q):
        return oi + instance.service(i) + instance.t(i, j, q) <= cj + TIME_TOL

    stage1: dict[int, tuple] = {}
    stage2: list[dict[int, tuple]] = [{} for _ in instance.scenarios.ids]
    for q in instance.fleet.vehicle_types:
        if instance.fleet.counts[q - 1] == 0:
            stage1[q] = ()
            for per in stage2:
                per[q] = ()
            continue
        arcs = []
        for j, (_, cj) in w1.items():
            if not needs(j, q):
                continue
            if instance.fleet.depot_availability[q - 1] > 0 and reach(0, 0.0, j, cj, q):
                arcs.append((0, j))
            for i, (oi, _) in w1.items():
                if i != j and needs(i, q) and reach(i, oi, j, cj, q):
                    arcs.append((i, j))
        stage1[q] = tuple(sorted(arcs))
        for k, w in enumerate(w2):
            arcs = []
            for j, (_, cj) in w.items():
                if not needs(j, q):
                    continue
                if instance.fleet.depot_availability[q - 1] > 0 and reach(0, 0.0, j, cj, q):
                    arcs.append((0, j))
                origins = {i: oi for i, (oi, _) in w1.items()}
                for i, (oi, _) in w.items():
                    origins[i] = min(oi, origins.get(i, math.inf))
                for i, oi in origins.items():
                    if i != j and needs(i, q) and reach(i, oi, j, cj, q):
                        arcs.append((i, j))
            for i in sorted(set(w1) | set(w)):
                if needs(i, q):
                    arcs.append((i, end))
            stage2[k][q] = tuple(sorted(set(arcs)))
    return ArcSets(stage1, tuple(stage2), frozenset(w1), tuple(frozenset(w) for w in w2), removed)


@dataclass
class StochasticModelHandle:
    """A built model with label maps back to problem indices."""

    model: MilpModel
    instance: Instance
    arcs: ArcSets
    Y_f: dict = field(default_factory=dict)
    Y_s: dict = field(default_factory=dict)
    X_f: dict = field(default_factory=dict)
    X_s: dict = field(default_factory=dict)
    z_f: dict = field(default_factory=dict)
    z_s: dict = field(default_factory=dict)
    S_f: dict = field(default_factory=dict)
    S_s: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    Gamma: dict = field(default_factory=dict)


def _bounds(model: MilpModel, j: int) -> tuple[float, float]:
    v = model.variables[j]
    return v.lower, v.upper


def build(instance: Instance, arcs: Optional[ArcSets] = None, name: str = "two_stage", freeze: bool = True) -> StochasticModelHandle:
    """Assemble objective and constraint families for ``instance``.

    Big-M coefficients are derived per row from the bounds of the variables
    involved, so each conditional row is exactly deactivated and no tighter.
    """
    arcs = arcs if arcs is not None else preprocess(instance)
    sc = instance.scenarios
    ST = sc.occurrence_times[0]
    end = instance.end_node
    W1 = instance.windows.stage1
    m = MilpModel(name, config={"staging_time": ST, "T_max": instance.windows.horizon})
    h = StochasticModelHandle(m, instance, arcs)
    if arcs.is_empty:
        log.warning("no feasible arcs: the model is trivial with objective 0")
    Q = instance.fleet.vehicle_types
    kappa = instance.fleet.counts
    avail = instance.fleet.depot_availability
    E1 = arcs.stage1_nodes
    E2 = arcs.stage2_nodes

    def req(i, q):
        return instance.asset(i).requirements[q - 1]

    # service indicators: one per asset and context
    for i in range(1, instance.n + 1):
        h.Y_f[i] = m.add_var(f"Y_f[{i}]", VarKind.BINARY, 0, 1 if i in E1 else 0)
    for xi in sc.ids:
        for i in range(1, instance.n + 1):
            h.Y_s[i, xi] = m.add_var(f"Y_s[{i},{xi}]", VarKind.BINARY, 0, 1 if i in E2[xi - 1] else 0)

    # times; window and domain limits are carried as bounds
    mixed = {}
    for i in sorted(E1):
        o, c = W1[i]
        h.S_f[i] = m.add_var(f"S_f[{i}]", VarKind.CONTINUOUS, o, c)
    for xi in sc.ids:
        W2 = instance.windows.scenario(xi)
        for i in sorted(E1 | E2[xi - 1]):
            if i in E2[xi - 1] and i in E1:
                lo, hi = min(W1[i][0], W2[i][0]), max(W1[i][1], W2[i][1])
                mixed[i, xi] = W2[i]
            elif i in E2[xi - 1]:
                lo, hi = W2[i]
            else:
                # only read through the handoff rows, which pin it to S_f
                lo, hi = W1[i]
            h.S_s[i, xi] = m.add_var(f"S_s[{i},{xi}]", VarKind.CONTINUOUS, lo, hi)
    for i in sorted(E1):
        h.w[i] = m.add_var(f"w[{i}]", VarKind.BINARY)

    def cap(i, j, q):
        u = kappa[q - 1]
        if i == 0:
            u = min(u, avail[q - 1])
        else:
            u = min(u, req(i, q))
        if j != end:
            u = min(u, req(j, q))
        return u

    for q in Q:
        for i, j in arcs.stage1[q]:
            u = cap(i, j, q)
            h.X_f[i, j, q] = m.add_var(f"X_f[{i},{j},{q}]", VarKind.INTEGER, 0, u)
            h.z_f[i, j, q] = m.add_var(f"z_f[{i},{j},{q}]", VarKind.BINARY)
    for xi in sc.ids:
        for q in Q:
            for i, j in arcs.stage2[xi - 1][q]:
                u = cap(i, j, q)
                h.X_s[i, j, q, xi] = m.add_var(f"X_s[{i},{j},{q},{xi}]", VarKind.INTEGER, 0, u)
                # arcs into the end depot carry no timing, so no indicator is needed
                if j != end:
                    h.z_s[i, j, q, xi] = m.add_var(f"z_s[{i},{j},{q},{xi}]", VarKind.BINARY)

    # expected protected value
    obj = {}
    for i in range(1, instance.n + 1):
        v = instance.asset(i).value
        obj[h.Y_f[i]] = v
        for xi in sc.ids:
            obj[h.Y_s[i, xi]] = obj.get(h.Y_s[i, xi], 0.0) + sc.probability(xi) * v
    m.set_objective(obj)

    def flow_in(ctx, q, j):
        if ctx == 0:
            return [h.X_f[i, j, q] for i in arcs.predecessors(0, q, j)]
        return [h.X_s[i, j, q, ctx] for i in arcs.predecessors(ctx, q, j)]

    def flow_out(ctx, q, i):
        if ctx == 0:
            return [h.X_f[i, j, q] for j in arcs.successors(0, q, i)]
        return [h.X_s[i, j, q, ctx] for j in arcs.successors(ctx, q, i)]

    for q in Q:
        for xi in sc.ids:
            # depot balance, with stage-2 departures from the depot on the left
            row = [(x, 1.0) for x in flow_out(0, q, 0) + flow_out(xi, q, 0)]
            row += [(x, -1.0) for x in flow_in(xi, q, end)]
            if row:
                m.add_constraint(row, Sense.EQ, 0.0, f"depot_balance[{q},{xi}]")
            # depot cap, one copy per scenario since stage-2 departures differ
            dep = flow_out(0, q, 0) + flow_out(xi, q, 0)
            if dep:
                m.add_constraint([(x, 1.0) for x in dep], Sense.LE, avail[q - 1], f"depot_cap[{q},{xi}]")

    # flow conservation per scenario
    for xi in sc.ids:
        for q in Q:
            for j in range(1, instance.n + 1):
                ins = flow_in(0, q, j) + flow_in(xi, q, j)
                outs = flow_out(0, q, j) + flow_out(xi, q, j)
                if ins or outs:
                    m.add_constraint([(x, 1.0) for x in ins] + [(x, -1.0) for x in outs], Sense.EQ, 0.0, f"flow[{j},{q},{xi}]")

    # staging nodes keep at least one vehicle
    for j in sorted(E1):
        row = []
        for q in Q:
            row += [(x, 1.0) for x in flow_out(0, q, j)] + [(x, -1.0) for x in flow_in(0, q, j)]
        M = float(sum(req(j, q) for q in Q))
        m.add_constraint(row + [(h.w[j], M)], Sense.GE, 0.0, f"staging_lo[{j}]")
        m.add_constraint(row + [(h.w[j], 1.0)], Sense.LE, 0.0, f"staging_hi[{j}]")

    # stage-1 services end by ST, stage-2 ones start no earlier than ST - a
    for (i, j, q), z in h.z_f.items():
        a = instance.service(j)
        M = max(0.0, _bounds(m, h.S_f[j])[1] + a - ST)
        m.add_constraint([(h.S_f[j], 1.0), (z, M)], Sense.LE, M + ST - a, f"stage1_end[{i},{j},{q}]")
    for (i, j, q, xi), z in h.z_s.items():
        a = instance.service(j)
        M = max(0.0, ST - a - _bounds(m, h.S_s[j, xi])[0])
        m.add_constraint([(h.S_s[j, xi], 1.0), (z, -M)], Sense.GE, ST - a - M, f"stage2_end[{i},{j},{q},{xi}]")

    # synchronised arrivals
    for q in Q:
        for j in sorted(E1):
            if req(j, q) > 0:
                m.add_constraint([(x, 1.0) for x in flow_in(0, q, j)] + [(h.Y_f[j], -req(j, q))], Sense.EQ, 0.0, f"sync_f[{j},{q}]")
        for xi in sc.ids:
            for j in sorted(E2[xi - 1]):
                if req(j, q) > 0:
                    m.add_constraint(
                        [(x, 1.0) for x in flow_in(xi, q, j)] + [(h.Y_s[j, xi], -req(j, q))], Sense.EQ, 0.0, f"sync_s[{j},{q},{xi}]"
                    )

    # served at most once; only rows where both indicators can be 1 are non-redundant
    for xi in sc.ids:
        for j in sorted(E1 & E2[xi - 1]):
            m.add_constraint([(h.Y_f[j], 1.0), (h.Y_s[j, xi], 1.0)], Sense.LE, 1.0, f"once[{j},{xi}]")

    # arc indicators
    for key, z in h.z_f.items():
        x = h.X_f[key]
        m.add_constraint([(x, 1.0), (z, -m.variables[x].upper)], Sense.LE, 0.0, f"link_f[{','.join(map(str, key))}]")
    for key, z in h.z_s.items():
        x = h.X_s[key]
        m.add_constraint([(x, 1.0), (z, -m.variables[x].upper)], Sense.LE, 0.0, f"link_s[{','.join(map(str, key))}]")

    # timing along used arcs
    def timing(S_i, S_j, i, j, q, z, label):
        t = instance.t(i, j, q)
        a = instance.service(i)
        lo_j = _bounds(m, S_j)[0]
        hi_i = _bounds(m, S_i)[1] if S_i is not None else 0.0
        M = max(0.0, hi_i + a + t - lo_j)
        row = [(S_j, -1.0), (z, M)]
        if S_i is not None:
            row.append((S_i, 1.0))
        m.add_constraint(row, Sense.LE, M - t - a, label)

    for (i, j, q), z in h.z_f.items():
        timing(h.S_f.get(i), h.S_f[j], i, j, q, z, f"time_f[{i},{j},{q}]")
    for (i, j, q, xi), z in h.z_s.items():
        timing(h.S_s.get((i, xi)), h.S_s[j, xi], i, j, q, z, f"time_s[{i},{j},{q},{xi}]")

    # staging handoff times
    for i in sorted(E1):
        sf_lo, sf_hi = _bounds(m, h.S_f[i])
        for xi in sc.ids:
            ss = h.S_s[i, xi]
            ss_lo, ss_hi = _bounds(m, ss)
            M1 = max(0.0, sf_hi - ss_lo)
            M2 = max(0.0, ss_hi - sf_lo)
            m.add_constraint([(h.S_f[i], 1.0), (ss, -1.0), (h.w[i], M1)], Sense.LE, M1, f"handoff_hi[{i},{xi}]")
            m.add_constraint([(h.S_f[i], 1.0), (ss, -1.0), (h.w[i], -M2)], Sense.GE, -M2, f"handoff_lo[{i},{xi}]")

    # domain rule for assets holding windows in both stages: S_s doubles as the
    # handoff time, so its scenario window only binds when serviced there
    for (i, xi), (o, c) in sorted(mixed.items()):
        ss = h.S_s[i, xi]
        lo, hi = _bounds(m, ss)
        y = h.Y_s[i, xi]
        m.add_constraint([(ss, 1.0), (y, -(o - lo))], Sense.GE, lo, f"window_s_lo[{i},{xi}]")
        m.add_constraint([(ss, 1.0), (y, hi - c)], Sense.LE, hi, f"window_s_hi[{i},{xi}]")

    if freeze:
        m.freeze()
    return h


# --- plan extraction ------------------------------------------------------


def _strip(start: dict, flows: dict, times: Mapping[int, float], stop: int) -> dict:
    """Decompose integer arc ``flows`` into one path per vehicle.

    ``start`` maps vehicle -> start node; each vehicle repeatedly follows a
    remaining positive-flow arc out of its node (earliest head first) until
    none is left or it reaches ``stop``.  Returns vehicle -> list of nodes.
    """
    residual = {k: int(round(v)) for k, v in flows.items() if round(v) > 0}
    out_arcs: dict[int, list[int]] = defaultdict(list)
    for i, j in sorted(residual):
        out_arcs[i].append(j)
    paths = {}
    # vehicles move in order of readiness so earlier arrivals take earlier arcs
    pending = sorted(start.items(), key=lambda kv: (times.get(kv[1], 0.0), kv[0]))
    for v, node in pending:
        path = [node]
        guard = 0
        while node != stop:
            nxt = [j for j in out_arcs[node] if residual.get((node, j), 0) > 0]
            if not nxt:
                break
            j = min(nxt, key=lambda j: (times.get(j, math.inf), j))
            residual[node, j] -= 1
            path.append(j)
            node = j
            guard += 1
            if guard > 10_000:
                raise ExtractionError("cycle while decomposing flows")
        paths[v] = path
    left = {k: r for k, r in residual.items() if r > 0}
    if left:
        raise ExtractionError(f"undecomposed flow remains: {sorted(left.items())[:10]}")
    return paths


def extract_plan(handle: StochasticModelHandle, solution: Solution, instance: Optional[Instance] = None) -> Plan:
    """Turn aggregate integer flows into named vehicle routes."""
    if solution.values is None:
        raise ExtractionError(f"solution has no values (status {solution.status})")
    inst = instance or handle.instance
    x = solution.values
    end = inst.end_node
    vehicles = inst.fleet.vehicles()

    def val(idx):
        return float(x[idx])

    Y1 = frozenset(i for i, k in handle.Y_f.items() if val(k) > 0.5)
    Y2 = tuple(frozenset(i for (i, xi), k in handle.Y_s.items() if xi == s and val(k) > 0.5) for s in inst.scenarios.ids)
    S1 = {i: val(k) for i, k in handle.S_f.items()}
    stage1_routes: dict = {}
    staging: dict = {}
    for q in inst.fleet.vehicle_types:
        vs = [v for v in vehicles if v[0] == q]
        flows = {(i, j): val(k) for (i, j, qq), k in handle.X_f.items() if qq == q}
        n_out = sum(int(round(f)) for (i, _), f in flows.items() if i == 0)
        avail = inst.fleet.depot_availability[q - 1]
        if n_out > avail:
            raise ExtractionError(f"type {q}: {n_out} vehicles leave the depot, {avail} available")
        paths = _strip({v: 0 for v in vs[:n_out]}, flows, S1, end)
        for v in vs:
            path = paths.get(v, [0])
            stage1_routes[v] = tuple((i, S1[i]) for i in path[1:])
            staging[v] = path[-1]

    stage2 = []
    for xi in inst.scenarios.ids:
        S2 = {i: val(k) for (i, s), k in handle.S_s.items() if s == xi}
        routes = {}
        for q in inst.fleet.vehicle_types:
            vs = [v for v in vehicles if v[0] == q]
            flows = {(i, j): val(k) for (i, j, qq, s), k in handle.X_s.items() if qq == q and s == xi}
            ready = {**{0: -1.0}, **S2}
            paths = _strip({v: staging[v] for v in vs}, flows, ready, end)
            for v in vs:
                node = staging[v]
                first = (node, S1[node] if node in S1 else 0.0)
                visits = [(i, S2[i]) for i in paths[v][1:] if i != end]
                routes[v] = (first, *visits)
        stage2.append(routes)
    return Plan(tuple(vehicles), stage1_routes, staging, tuple(stage2), Y1, Y2)


# --- plan -> variable assignment ------------------------------------------


def assignment_from_plan(handle: StochasticModelHandle, plan: Plan) -> np.ndarray:
    """Variable vector reproducing ``plan`` in ``handle.model``.

    Used to seed the branch and bound with a heuristic plan and to cross
    check the validator against the model rows.  Raises ``KeyError`` when
    the plan uses an arc the model does not contain.
    """
    m = handle.model
    inst = handle.instance
    end = inst.end_node
    x = np.zeros(m.n_vars)
    for v in m.variables:
        if v.kind is VarKind.CONTINUOUS:
            x[v.index] = min(max(0.0, v.lower), v.upper)
    for i in plan.serviced_stage1:
        x[handle.Y_f[i]] = 1
    for xi, served in enumerate(plan.serviced_stage2, start=1):
        for i in served:
            x[handle.Y_s[i, xi]] = 1
    for v, route in plan.stage1_routes.items():
        q = v[0]
        prev = 0
        for node, s in route:
            x[handle.S_f[node]] = s
            x[handle.X_f[prev, node, q]] += 1
            x[handle.z_f[prev, node, q]] = 1
            prev = node
    for i, k in handle.w.items():
        stays = any(plan.staging_nodes[v] == i for v in plan.vehicles)
        x[k] = 1 if stays else 0
        for xi in inst.scenarios.ids:
            x[handle.S_s[i, xi]] = x[handle.S_f[i]] if stays else x[handle.S_s[i, xi]]
    for xi, routes in enumerate(plan.stage2_routes, start=1):
        for v, route in routes.items():
            q = v[0]
            prev = route[0][0]
            for node, s in route[1:]:
                x[handle.S_s[node, xi]] = s
                x[handle.X_s[prev, node, q, xi]] += 1
                x[handle.z_s[prev, node, q, xi]] = 1
                prev = node
            if prev != 0 or len(route) > 1:
                x[handle.X_s[prev, end, q, xi]] += 1
    return x
