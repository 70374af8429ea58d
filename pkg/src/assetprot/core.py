"""Problem and solution data model, instance files, and plan evaluation.

Node numbering follows the routing convention used throughout the package:
node ``0`` is the start depot, assets are ``1..n`` and ``n + 1`` is the end
depot.  Vehicle types and scenarios are 1-based as well.  All times are
decimal hours from the start of operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

PROB_TOL = 1e-9
TIME_TOL = 1e-6

Window = tuple[float, float]
Vehicle = tuple[int, int]
Visit = tuple[int, float]


class InstanceError(ValueError):
    """Raised when instance data violates an invariant.

    ``check`` names the failed invariant so callers can report it.
    """

    def __init__(self, check: str, message: str):
        super().__init__(f"{check}: {message}")
        self.check = check


class InstanceFormatError(ValueError):
    """Raised when an instance/plan file cannot be parsed."""


@dataclass(frozen=True)
class Asset:
    id: int
    location: tuple[float, float]
    value: float
    service_duration: float
    requirements: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(v) for v in self.location))
        object.__setattr__(self, "requirements", tuple(int(r) for r in self.requirements))


@dataclass(frozen=True)
class Fleet:
    counts: tuple[int, ...]
    depot_availability: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(k) for k in self.counts))
        avail = self.counts if self.depot_availability is None else self.depot_availability
        object.__setattr__(self, "depot_availability", tuple(int(k) for k in avail))

    @property
    def vehicle_types(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.counts) + 1))

    @property
    def n_types(self) -> int:
        return len(self.counts)

    def vehicles(self) -> list[Vehicle]:
        """Concrete (type, index) identities, in type-major order."""
        return [(q, k) for q, count in zip(self.vehicle_types, self.counts) for k in range(1, count + 1)]


@dataclass(frozen=True)
class ScenarioSet:
    probabilities: tuple[float, ...]
    occurrence_times: tuple[float, ...]
    staging_time: float

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        object.__setattr__(self, "occurrence_times", tuple(float(t) for t in self.occurrence_times))
        object.__setattr__(self, "staging_time", float(self.staging_time))

    @property
    def n_scenarios(self) -> int:
        return len(self.probabilities)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_scenarios + 1))

    def probability(self, xi: int) -> float:
        return self.probabilities[xi - 1]


@dataclass(frozen=True, eq=False)
class TravelMatrix:
    """Travel times ``times[q-1, i, j]`` in hours over nodes ``0..n+1``."""

    times: np.ndarray

    def __post_init__(self):
        arr = np.array(self.times, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise InstanceError("travel_shape", f"expected (types, m, m) array, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    def __call__(self, i: int, j: int, q: int) -> float:
        return float(self.times[q - 1, i, j])

    def __eq__(self, other):
        if not isinstance(other, TravelMatrix):
            return NotImplemented
        return self.times.shape == other.times.shape and bool(np.array_equal(self.times, other.times))

    __hash__ = None

    @classmethod
    def euclidean(cls, points: Sequence[tuple[float, float]], speeds: Sequence[float]) -> "TravelMatrix":
        pts = np.asarray(points, dtype=float)
        dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
        return cls(np.stack([dist / v for v in speeds]))


@dataclass(frozen=True)
class TimeWindows:
    """Service-start windows per context.

    ``stage1`` maps asset id to ``(open, close)``; ``stage2[xi - 1]`` does the
    same for scenario ``xi``.  An absent key means the asset is not at risk in
    that context.
    """

    stage1: Mapping[int, Window]
    stage2: tuple[Mapping[int, Window], ...]
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "stage1", {int(k): (float(o), float(c)) for k, (o, c) in sorted(self.stage1.items())})
        object.__setattr__(
            self,
            "stage2",
            tuple({int(k): (float(o), float(c)) for k, (o, c) in sorted(w.items())} for w in self.stage2),
        )
        object.__setattr__(self, "horizon", float(self.horizon))

    def scenario(self, xi: int) -> Mapping[int, Window]:
        return self.stage2[xi - 1]


@dataclass(frozen=True)
class Instance:
    assets: tuple[Asset, ...]
    depots: tuple[tuple[float, float], tuple[float, float]]
    fleet: Fleet
    scenarios: ScenarioSet
    travel: TravelMatrix
    windows: TimeWindows
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "depots", tuple(tuple(float(v) for v in d) for d in self.depots))
        object.__setattr__(self, "meta", dict(self.meta))
        self.validate()

    @property
    def n(self) -> int:
        return len(self.assets)

    @property
    def end_node(self) -> int:
        return self.n + 1

    @property
    def n_types(self) -> int:
        return self.fleet.n_types

    @property
    def staging_time(self) -> float:
        return self.scenarios.staging_time

    def asset(self, i: int) -> Asset:
        return self.assets[i - 1]

    def location(self, node: int) -> tuple[float, float]:
        if node == 0:
            return self.depots[0]
        if node == self.end_node:
            return self.depots[1]
        return self.assets[node - 1].location

    def service(self, node: int) -> float:
        return 0.0 if node in (0, self.end_node) else self.assets[node - 1].service_duration

    def t(self, i: int, j: int, q: int) -> float:
        return self.travel(i, j, q)

    def validate(self) -> None:
        """Check every type invariant; raise :class:`InstanceError` on the first failure."""
        n, nq = self.n, self.fleet.n_types
        for k, a in enumerate(self.assets, start=1):
            if a.id != k:
                raise InstanceError("asset_ids", f"asset at position {k} has id {a.id}")
            if not all(math.isfinite(v) for v in a.location):
                raise InstanceError("asset_location", f"asset {k} has non-finite location {a.location}")
            if not (math.isfinite(a.value) and a.value >= 0):
                raise InstanceError("asset_value", f"asset {k} value {a.value} must be finite and >= 0")
            if not (math.isfinite(a.service_duration) and a.service_duration >= 0):
                raise InstanceError("service_duration", f"asset {k} service duration must be >= 0")
            if len(a.requirements) != nq:
                raise InstanceError("requirements_length", f"asset {k} has {len(a.requirements)} entries, fleet has {nq} types")
            if any(r < 0 for r in a.requirements):
                raise InstanceError("requirements_sign", f"asset {k} has a negative requirement")
        for d in self.depots:
            if not all(math.isfinite(v) for v in d):
                raise InstanceError("depot_location", f"non-finite depot location {d}")
        if any(k < 0 for k in self.fleet.counts):
            raise InstanceError("fleet_counts", "vehicle counts must be >= 0")
        if len(self.fleet.depot_availability) != nq or any(
            not 0 <= s <= k for s, k in zip(self.fleet.depot_availability, self.fleet.counts)
        ):
            raise InstanceError("depot_availability", "depot availability must satisfy 0 <= start_q <= kappa_q")

        sc = self.scenarios
        if sc.n_scenarios < 1:
            raise InstanceError("scenarios", "at least one scenario is required")
        if len(sc.occurrence_times) != sc.n_scenarios:
            raise InstanceError("occurrence_times", "one occurrence time per scenario is required")
        if any(p < 0 or not math.isfinite(p) for p in sc.probabilities):
            raise InstanceError("probability_sign", "scenario probabilities must be >= 0")
        if abs(sum(sc.probabilities) - 1.0) > PROB_TOL:
            raise InstanceError("probability_sum", f"scenario probabilities sum to {sum(sc.probabilities):.12g}, not 1")
        if abs(sc.occurrence_times[0] - sc.staging_time) > PROB_TOL:
            raise InstanceError("staging_time", "the first occurrence time must equal the staging time")
        if any(b <= a for a, b in zip(sc.occurrence_times, sc.occurrence_times[1:])):
            raise InstanceError("occurrence_order", "occurrence times must be strictly increasing")

        m = n + 2
        if self.travel.times.shape != (nq, m, m):
            raise InstanceError("travel_shape", f"travel matrix must be ({nq}, {m}, {m}), got {self.travel.times.shape}")
        if not np.all(np.isfinite(self.travel.times)) or np.any(self.travel.times < 0):
            raise InstanceError("travel_values", "travel times must be finite and >= 0")
        if np.any(np.abs(np.diagonal(self.travel.times, axis1=1, axis2=2)) > 0):
            raise InstanceError("travel_diagonal", "t_iiq must be 0")

        w = self.windows
        if len(w.stage2) != sc.n_scenarios:
            raise InstanceError("windows_scenarios", "one stage-2 window map per scenario is required")
        if not (math.isfinite(w.horizon) and w.horizon >= 0):
            raise InstanceError("horizon", "horizon must be finite and >= 0")
        contexts = [("stage1", w.stage1)] + [(f"scenario {xi}", w.scenario(xi)) for xi in sc.ids]
        for name, mapping in contexts:
            for i, (o, c) in mapping.items():
                if not 1 <= i <= n:
                    raise InstanceError("window_asset", f"{name} window for unknown asset {i}")
                if not (0 <= o <= c <= w.horizon + TIME_TOL):
                    raise InstanceError("window_bounds", f"{name} window of asset {i} is [{o}, {c}], horizon {w.horizon}")
                if not any(self.assets[i - 1].requirements):
                    raise InstanceError("at_risk_requirements", f"asset {i} is at risk but requires no vehicles")
        for i, (o, c) in w.stage1.items():
            if c + self.assets[i - 1].service_duration > sc.staging_time + TIME_TOL:
                raise InstanceError("stage1_close", f"stage-1 window of asset {i} ends after the staging time")

    def with_probabilities(self, probabilities: Sequence[float]) -> "Instance":
        sc = ScenarioSet(tuple(probabilities), self.scenarios.occurrence_times, self.scenarios.staging_time)
        return Instance(self.assets, self.depots, self.fleet, sc, self.travel, self.windows, self.meta)

    def with_fleet(self, fleet: Fleet) -> "Instance":
        travel = self.travel
        if fleet.n_types != self.n_types:
            raise InstanceError("fleet_types", "replacement fleet must keep the number of vehicle types")
        return Instance(self.assets, self.depots, fleet, self.scenarios, travel, self.windows, self.meta)


@dataclass(frozen=True)
class Plan:
    """Per-vehicle routes split at the staging time.

    ``stage1_routes[v]`` lists ``(asset, service_start)`` visits made before
    the staging time; ``staging_nodes[v]`` is where vehicle ``v`` waits for the
    scenario to be revealed (``0`` when it never left the depot).
    ``stage2_routes[xi - 1][v]`` starts with ``(staging_node, time)`` followed
    by that scenario's visits.
    """

    vehicles: tuple[Vehicle, ...]
    stage1_routes: Mapping[Vehicle, tuple[Visit, ...]]
    staging_nodes: Mapping[Vehicle, int]
    stage2_routes: tuple[Mapping[Vehicle, tuple[Visit, ...]], ...]
    serviced_stage1: frozenset
    serviced_stage2: tuple[frozenset, ...]

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(tuple(v) for v in self.vehicles))
        object.__setattr__(self, "serviced_stage1", frozenset(self.serviced_stage1))
        object.__setattr__(self, "serviced_stage2", tuple(frozenset(s) for s in self.serviced_stage2))

    @classmethod
    def empty(cls, instance: Instance) -> "Plan":
        vehicles = instance.fleet.vehicles()
        return cls(
            vehicles=tuple(vehicles),
            stage1_routes={v: () for v in vehicles},
            staging_nodes={v: 0 for v in vehicles},
            stage2_routes=tuple({v: ((0, 0.0),) for v in vehicles} for _ in instance.scenarios.ids),
            serviced_stage1=frozenset(),
            serviced_stage2=tuple(frozenset() for _ in instance.scenarios.ids),
        )


@dataclass(frozen=True)
class Evaluation:
    stage1_value: float
    stage2_values: tuple[float, ...]
    expected_total: float
    stage1_pct: Optional[float]
    stage2_pct: tuple[Optional[float], ...]


def _pct(protected: float, pool: float) -> Optional[float]:
    return None if pool <= 0 else 100.0 * protected / pool


def evaluate(instance: Instance, plan: Plan) -> Evaluation:
    """Expected protected value of ``plan``; feasibility is not checked."""
    F = instance.scenarios.n_scenarios
    if len(plan.serviced_stage2) != F or len(plan.stage2_routes) != F:
        raise ValueError(f"plan has {len(plan.serviced_stage2)} scenarios, instance has {F}")
    for i in plan.serviced_stage1.union(*plan.serviced_stage2):
        if not 1 <= i <= instance.n:
            raise ValueError(f"plan services unknown asset {i}")

    def value(ids: Iterable[int]) -> float:
        return float(sum(instance.asset(i).value for i in ids))

    v1 = value(plan.serviced_stage1)
    v2 = tuple(value(s) for s in plan.serviced_stage2)
    total = v1 + sum(p * v for p, v in zip(instance.scenarios.probabilities, v2))
    w = instance.windows
    pct1 = _pct(value(plan.serviced_stage1 & w.stage1.keys()), value(w.stage1))
    pct2 = tuple(
        _pct(value(s & w.scenario(xi).keys()), value(w.scenario(xi)))
        for xi, s in zip(instance.scenarios.ids, plan.serviced_stage2)
    )
    return Evaluation(v1, v2, total, pct1, pct2)


# --- canonical JSON -------------------------------------------------------


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x}")
    s = f"{x:.9f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def dumps_canonical(obj, indent: int = 0) -> str:
    """JSON text with sorted keys and fixed-point numbers (no exponents)."""
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {dumps_canonical(v, indent + 1)}' for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (Mapping, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps_canonical(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + "  " + dumps_canonical(v, indent + 1) for v in seq) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _window_list(mapping: Mapping[int, Window]) -> list:
    return [{"asset": i, "open": o, "close": c} for i, (o, c) in sorted(mapping.items())]


def instance_to_dict(instance: Instance) -> dict:
    nq = instance.n_types
    return {
        "meta": dict(instance.meta),
        "assets": [
            {
                "id": a.id,
                "x": a.location[0],
                "y": a.location[1],
                "value": a.value,
                "service_duration": a.service_duration,
                "requirements": list(a.requirements),
            }
            for a in instance.assets
        ],
        "depots": {"start": list(instance.depots[0]), "end": list(instance.depots[1])},
        "fleet": {
            "counts": list(instance.fleet.counts),
            "depot_availability": list(instance.fleet.depot_availability),
        },
        "scenarios": {
            "staging_time": instance.scenarios.staging_time,
            "items": [
                {"id": xi, "probability": p, "occurrence_time": t}
                for xi, p, t in zip(instance.scenarios.ids, instance.scenarios.probabilities, instance.scenarios.occurrence_times)
            ],
        },
        "travel": {
            "nodes": instance.n + 2,
            "times": {str(q): instance.travel.times[q - 1].ravel().tolist() for q in range(1, nq + 1)},
        },
        "windows": {
            "horizon": instance.windows.horizon,
            "stage1": _window_list(instance.windows.stage1),
            "stage2": [{"scenario": xi, "windows": _window_list(w)} for xi, w in zip(instance.scenarios.ids, instance.windows.stage2)],
        },
    }


def _field(d, key, path):
    try:
        return d[key]
    except (KeyError, TypeError, IndexError):
        raise InstanceFormatError(f"missing or invalid field '{path}{key}'") from None


def instance_from_dict(d: Mapping) -> Instance:
    if not isinstance(d, Mapping):
        raise InstanceFormatError("top level must be a JSON object")
    missing = {"meta", "assets", "depots", "fleet", "scenarios", "travel", "windows"} - set(d)
    if missing:
        raise InstanceFormatError(f"missing top-level keys: {sorted(missing)}")
    try:
        assets = tuple(
            Asset(
                id=int(_field(a, "id", f"assets[{k}].")),
                location=(float(_field(a, "x", f"assets[{k}].")), float(_field(a, "y", f"assets[{k}]."))),
                value=float(_field(a, "value", f"assets[{k}].")),
                service_duration=float(_field(a, "service_duration", f"assets[{k}].")),
                requirements=tuple(_field(a, "requirements", f"assets[{k}].")),
            )
            for k, a in enumerate(d["assets"])
        )
        fl = d["fleet"]
        fleet = Fleet(tuple(_field(fl, "counts", "fleet.")), tuple(fl.get("depot_availability", fl["counts"])))
        sc = d["scenarios"]
        items = _field(sc, "items", "scenarios.")
        scenarios = ScenarioSet(
            tuple(float(_field(it, "probability", "scenarios.items[].")) for it in items),
            tuple(float(_field(it, "occurrence_time", "scenarios.items[].")) for it in items),
            float(_field(sc, "staging_time", "scenarios.")),
        )
        tr = d["travel"]
        m = int(_field(tr, "nodes", "travel."))
        times = _field(tr, "times", "travel.")
        nq = len(fleet.counts)
        mats = []
        for q in range(1, nq + 1):
            flat = _field(times, str(q), "travel.times.")
            if len(flat) != m * m:
                raise InstanceFormatError(f"travel.times.{q} has {len(flat)} entries, expected {m * m}")
            mats.append(np.asarray(flat, dtype=float).reshape(m, m))
        travel = TravelMatrix(np.stack(mats) if mats else np.zeros((0, m, m)))
        w = d["windows"]

        def wmap(lst, path):
            return {int(_field(e, "asset", path)): (float(_field(e, "open", path)), float(_field(e, "close", path))) for e in lst}

        stage2_items = sorted(_field(w, "stage2", "windows."), key=lambda e: int(e["scenario"]))
        windows = TimeWindows(
            stage1=wmap(_field(w, "stage1", "windows."), "windows.stage1[]."),
            stage2=tuple(wmap(e["windows"], "windows.stage2[].windows[].") for e in stage2_items),
            horizon=float(_field(w, "horizon", "windows.")),
        )
        dp = d["depots"]
        depots = (tuple(_field(dp, "start", "depots.")), tuple(_field(dp, "end", "depots.")))
        return Instance(assets, depots, fleet, scenarios, travel, windows, dict(d["meta"]))
    except InstanceFormatError:
        raise
    except InstanceError:
        raise
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"malformed instance: {exc}") from exc


def save_instance(instance: Instance, path) -> None:
    text = dumps_canonical(instance_to_dict(instance)) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def loads_json(text: str, source: str = "<string>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_instance(path) -> Instance:
    path = Path(path)
    return instance_from_dict(loads_json(path.read_text(encoding="utf-8"), str(path)))


# --- plan files -----------------------------------------------------------


def _vkey(v: Vehicle) -> str:
    return f"{v[0]}.{v[1]}"


def _parse_vkey(s: str) -> Vehicle:
    q, k = s.split(".")
    return int(q), int(k)


def plan_to_dict(plan: Plan) -> dict:
    return {
        "vehicles": [list(v) for v in plan.vehicles],
        "stage1": {_vkey(v): [list(x) for x in plan.stage1_routes.get(v, ())] for v in plan.vehicles},
        "staging": {_vkey(v): plan.staging_nodes.get(v, 0) for v in plan.vehicles},
        "stage2": [
            {"scenario": xi, "routes": {_vkey(v): [list(x) for x in routes.get(v, ())] for v in plan.vehicles}}
            for xi, routes in enumerate(plan.stage2_routes, start=1)
        ],
        "serviced": {
            "stage1": sorted(plan.serviced_stage1),
            "stage2": [sorted(s) for s in plan.serviced_stage2],
        },
    }


def plan_from_dict(d: Mapping) -> Plan:
    try:
        vehicles = tuple((int(q), int(k)) for q, k in d["vehicles"])

        def routes(m):
            return {_parse_vkey(k): tuple((int(node), float(t)) for node, t in visits) for k, visits in m.items()}

        stage2 = sorted(d["stage2"], key=lambda e: int(e["scenario"]))
        return Plan(
            vehicles=vehicles,
            stage1_routes=routes(d["stage1"]),
            staging_nodes={_parse_vkey(k): int(v) for k, v in d["staging"].items()},
            stage2_routes=tuple(routes(e["routes"]) for e in stage2),
            serviced_stage1=frozenset(int(i) for i in d["serviced"]["stage1"]),
            serviced_stage2=tuple(frozenset(int(i) for i in s) for s in d["serviced"]["stage2"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError(f"malformed plan: {exc!r}") from exc


def save_plan(plan: Plan, path) -> None:
    Path(path).write_text(dumps_canonical(plan_to_dict(plan)) + "\n", encoding="utf-8")


def load_plan(path) -> Plan:
    path = Path(path)
    return plan_from_dict(loads_json(path.read_text(encoding="utf-8"), str(path)))


def evaluation_to_dict(ev: Evaluation) -> dict:
    return {
        "stage1_value": ev.stage1_value,
        "stage2_values": list(ev.stage2_values),
        "expected_total": ev.expected_total,
        "stage1_pct": ev.stage1_pct,
        "stage2_pct": list(ev.stage2_pct),
    }
