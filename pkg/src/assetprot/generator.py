"""Seeded benchmark instances.

Randomness comes from PCG32 (XSH-RR, 64-bit state, 32-bit output), coded
here so that a seed produces the same instance file on every platform.
Floating-point data are quantised before they are stored (coordinates to
1e-3 km, times to 1e-6 h) so that saved files load back bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

from .core import Asset, Fleet, Instance, ScenarioSet, TimeWindows, TravelMatrix
from .firespread import FireModel, derive_windows, window_from_impact

MASK64 = (1 << 64) - 1
MASK32 = (1 << 32) - 1

REQUIREMENT_POOL = ((2, 1, 0), (2, 0, 1), (1, 0, 2), (0, 2, 1), (1, 1, 1), (1, 2, 0), (1, 2, 1))

FLEET_PRESETS = {"set1": (3, 2, 2), "set2": (4, 3, 2)}
SET2_CAPTION = (3, 3, 2)

CATEGORIES = ("Stage1", "Scenario(1)", "Scenario(2)", "BothScenarios", "NotAtRisk")


class PCG32:
    """Minimal PCG32 generator (O'Neill's ``pcg32_random_r``)."""

    MULT = 6364136223846793005

    def __init__(self, seed: int, seq: int = 54):
        self.state = 0
        self.inc = ((seq << 1) | 1) & MASK64
        self.next_u32()
        self.state = (self.state + (seed & MASK64)) & MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * self.MULT + self.inc) & MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & MASK32

    def bounded(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` by threshold rejection."""
        if not 0 < bound <= MASK32 + 1:
            raise ValueError("bound out of range")
        threshold = ((MASK32 + 1) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def random(self) -> float:
        """Double in ``[0, 1)`` with 53 random bits."""
        a = self.next_u32() >> 5
        b = self.next_u32() >> 6
        return (a * 67108864 + b) / 9007199254740992.0

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]`` inclusive."""
        return lo + self.bounded(hi - lo + 1)

    def choice(self, seq: Sequence):
        return seq[self.bounded(len(seq))]


def preset_fleet(name, caption_variant: bool = False) -> Fleet:
    """Fleet for ``"set1"``/``"set2"`` or an explicit count vector.

    ``caption_variant`` selects the ``Set2 = (3, 3, 2)`` reading of the
    results table instead of ``(4, 3, 2)``.
    """
    if isinstance(name, str):
        key = name.lower()
        if key not in FLEET_PRESETS:
            raise ValueError(f"unknown fleet preset {name!r}; expected set1, set2 or explicit counts")
        if key == "set2" and caption_variant:
            return Fleet(SET2_CAPTION)
        return Fleet(FLEET_PRESETS[key])
    counts = tuple(int(k) for k in name)
    if any(k < 0 for k in counts):
        raise ValueError("vehicle counts must be non-negative")
    return Fleet(counts)


def _q(x: float, digits: int) -> float:
    return round(float(x), digits)


@dataclass(frozen=True)
class GeneratorParams:
    n_assets: int = 50
    seed: int = 1
    grid_size: float = 80.0
    fleet: object = "set1"
    set2_caption: bool = False
    vx0: float = 14.0
    vy0: float = 16.0
    vx1: float = 19.0
    vy1: float = 17.0
    vx2: float = 21.0
    vy2: float = 19.0
    delay: float = 2.0
    tw1: float = 1.0
    tw2: float = 1.0
    service: float = 0.5
    p1: float = 0.6
    p2: float = 0.4
    speed: float = 30.0
    staging_time: float = 4.5
    value_range: tuple = (10, 100)
    requirement_pool: tuple = REQUIREMENT_POOL
    ignition: tuple = (5.0, -55.0)
    fire_horizon: float = 8.0
    depot: tuple = (60.0, 60.0)
    coverage_min_assets: int = 50
    max_retries: int = 256

    def validate(self) -> None:
        if self.n_assets < 1:
            raise ValueError("n_assets must be >= 1")
        positive = ("grid_size", "vx0", "vy0", "vx1", "vy1", "vx2", "vy2", "delay", "tw1", "tw2", "speed", "staging_time", "fire_horizon")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.service < 0:
            raise ValueError("service must be >= 0")
        if min(self.p1, self.p2) < 0 or abs(self.p1 + self.p2 - 1.0) > 1e-9:
            raise ValueError("p1 and p2 must be non-negative and sum to 1")
        lo, hi = self.value_range
        if not 0 <= lo <= hi:
            raise ValueError("value_range must satisfy 0 <= lo <= hi")
        nq = preset_fleet(self.fleet, self.set2_caption).n_types
        if not self.requirement_pool or any(len(r) != nq or not any(r) for r in self.requirement_pool):
            raise ValueError(f"requirement vectors must have {nq} entries with at least one > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def fire_model(self) -> FireModel:
        st = self.staging_time
        return FireModel.wind_change(
            tuple(self.ignition), (self.vx0, self.vy0), [(st, self.vx1, self.vy1), (st + self.delay, self.vx2, self.vy2)]
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fleet"] = self.fleet if isinstance(self.fleet, str) else list(self.fleet)
        d["value_range"] = list(self.value_range)
        d["requirement_pool"] = [list(r) for r in self.requirement_pool]
        d["ignition"] = list(self.ignition)
        d["depot"] = list(self.depot)
        return d

    def with_overrides(self, **kw) -> "GeneratorParams":
        return replace(self, **kw)


def _draw_assets(rng: PCG32, p: GeneratorParams) -> list[Asset]:
    lo, hi = p.value_range
    assets = []
    for i in range(1, p.n_assets + 1):
        x = _q(rng.uniform(0.0, p.grid_size), 3)
        y = _q(rng.uniform(0.0, p.grid_size), 3)
        value = rng.randint(int(lo), int(hi))
        req = rng.choice(p.requirement_pool)
        assets.append(Asset(i, (x, y), value, p.service, tuple(req)))
    return assets


def _travel(points, nq: int, speed: float) -> TravelMatrix:
    tm = TravelMatrix.euclidean(points, [speed] * nq)
    return TravelMatrix((tm.times * 1e6).round() / 1e6)


def generate(params: Optional[GeneratorParams] = None, **overrides) -> Instance:
    """Instance drawn from ``params``; identical inputs give identical output."""
    p = params or GeneratorParams()
    if overrides:
        p = replace(p, **overrides)
    p.validate()
    fleet = preset_fleet(p.fleet, p.set2_caption)
    model = p.fire_model()
    st = p.staging_time
    scen = ScenarioSet((p.p1, p.p2), (st, st + p.delay), st)
    need_all = p.n_assets >= p.coverage_min_assets
    for attempt in range(p.max_retries + 1):
        rng = PCG32(p.seed, seq=attempt)
        assets = _draw_assets(rng, p)
        derived = derive_windows(assets, model, scen, tw1=p.tw1, tw2=p.tw2, fire_horizon=p.fire_horizon)
        counts = {c: 0 for c in CATEGORIES}
        for cat in derived.categories.values():
            counts[cat.label] += 1
        complete = all(counts[c] > 0 for c in CATEGORIES)
        if complete or not need_all:
            break
    points = [tuple(p.depot)] + [a.location for a in assets] + [tuple(p.depot)]
    travel = _travel(points, fleet.n_types, p.speed)
    # windows can never reference an asset that needs nothing, but guard anyway
    w = derived.windows
    stage1 = {i: (_q(o, 6), _q(c, 6)) for i, (o, c) in w.stage1.items()}
    stage2 = tuple({i: (_q(o, 6), _q(c, 6)) for i, (o, c) in ws.items()} for ws in w.stage2)
    closes = [c for _, c in stage1.values()] + [c for ws in stage2 for _, c in ws.values()]
    horizon = _q(max(closes, default=0.0) + float(travel.times.max()), 6)
    meta = {
        "generator": "assetprot.generate",
        "seed": p.seed,
        "attempts": attempt + 1,
        "retries": attempt,
        "categories_complete": complete,
        "category_counts": counts,
        "dropped_windows": [[i, ctx] for i, ctx in derived.dropped],
        "params": p.to_dict(),
    }
    return Instance(
        tuple(assets), (tuple(p.depot), tuple(p.depot)), fleet, scen, travel, TimeWindows(stage1, stage2, horizon), meta
    )


# --- micro instances for exact-oracle testing -----------------------------

MICRO_FLEETS = ((2, 1), (1, 1, 1), (1, 2), (3,), (2,), (1, 1))


@dataclass(frozen=True)
class MicroParams:
    n_assets: int = 4
    seed: int = 0
    fleet: tuple = (2, 1)
    n_scenarios: int = 2
    grid_size: float = 45.0
    speed: float = 30.0
    staging_time: float = 2.0
    delay: float = 0.5
    service: float = 0.25
    tw: float = 0.6
    value_range: tuple = (10, 100)
    probabilities: Optional[tuple] = None


def _micro_pool(fleet: Sequence[int]) -> list[tuple[int, ...]]:
    """Requirement vectors with at most two vehicles in total that the fleet can meet."""
    nq = len(fleet)
    pool = []
    for q in range(nq):
        for k in (1, 2):
            if k <= fleet[q]:
                r = [0] * nq
                r[q] = k
                pool.append(tuple(r))
    for q in range(nq):
        for q2 in range(q + 1, nq):
            if fleet[q] and fleet[q2]:
                r = [0] * nq
                r[q] = r[q2] = 1
                pool.append(tuple(r))
    return pool


def generate_micro(params: Optional[MicroParams] = None, **overrides) -> Instance:
    """Small instance with impact times drawn directly per risk category.

    Each asset independently falls in stage 1, a single scenario, every
    scenario or none; windows then follow the same rule as
    :func:`~assetprot.firespread.derive_windows`.
    """
    p = params or MicroParams()
    if overrides:
        p = replace(p, **overrides)
    if p.n_assets < 1 or p.n_scenarios < 1:
        raise ValueError("need at least one asset and one scenario")
    rng = PCG32(p.seed, seq=7)
    F = p.n_scenarios
    st = p.staging_time
    occ = tuple(st + k * p.delay for k in range(F))
    if p.probabilities is None:
        raw = [rng.randint(1, 9) for _ in range(F)]
        probs = tuple(r / sum(raw) for r in raw)
        probs = probs[:-1] + (1.0 - sum(probs[:-1]),)
    else:
        probs = tuple(p.probabilities)
    pool = _micro_pool(p.fleet)
    assets, stage1, stage2 = [], {}, [dict() for _ in range(F)]
    lo, hi = p.value_range
    for i in range(1, p.n_assets + 1):
        x = _q(rng.uniform(0, p.grid_size), 3)
        y = _q(rng.uniform(0, p.grid_size), 3)
        value = rng.randint(int(lo), int(hi))
        req = rng.choice(pool)
        assets.append(Asset(i, (x, y), value, p.service, req))
        kind = rng.bounded(4)
        if kind == 0:
            tau = _q(rng.uniform(0.5, st), 6)
            o, c = window_from_impact(tau, p.service, p.tw)
            c = min(c, st - p.service)
            if o <= c and c >= 0:
                stage1[i] = (_q(o, 6), _q(c, 6))
        elif kind in (1, 2):
            hit = [xi for xi in range(F) if kind == 2 or rng.bounded(2)] or [rng.bounded(F)]
            for xi in hit:
                tau = _q(rng.uniform(st + 0.1, st + 2.5), 6)
                o, c = window_from_impact(tau, p.service, p.tw)
                o = max(o, st - p.service)
                if o <= c:
                    stage2[xi][i] = (_q(o, 6), _q(c, 6))
    depot = (_q(p.grid_size / 2, 3), _q(p.grid_size / 2, 3))
    points = [depot] + [a.location for a in assets] + [depot]
    travel = _travel(points, len(p.fleet), p.speed)
    closes = [c for _, c in stage1.values()] + [c for w in stage2 for _, c in w.values()]
    horizon = _q(max(closes, default=0.0) + float(travel.times.max()), 6)
    meta = {"generator": "assetprot.generate_micro", "seed": p.seed, "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(p).items()}}
    return Instance(tuple(assets), (depot, depot), Fleet(tuple(p.fleet)), ScenarioSet(probs, occ, st), travel, TimeWindows(stage1, tuple(stage2), horizon), meta)


def micro_suite(count: int, seed0: int = 0, n_scenarios: int = 2, max_assets: int = 7) -> list[Instance]:
    """``count`` micro instances cycling through small fleets and sizes."""
    out = []
    for k in range(count):
        fleet = MICRO_FLEETS[k % len(MICRO_FLEETS)]
        n = 2 + (k * 5) % (max_assets - 1)
        out.append(generate_micro(n_assets=n, seed=seed0 + k, fleet=fleet, n_scenarios=n_scenarios))
    return out


# --- bundled instances ----------------------------------------------------

# Case-study table: requirement vector and impact times (hours after noon)
# at stage 1, scenario 1, scenario 2; 0 means not impacted in that context.
CASE_STUDY_TABLE = (
    ((2, 1, 0), 0, 0, 7),
    ((2, 0, 1), 3, 0, 0),
    ((1, 0, 2), 0, 7.5, 7.5),
    ((0, 2, 1), 4, 0, 0),
    ((1, 0, 2), 0, 10, 0),
    ((1, 1, 1), 0, 7, 7),
    ((2, 1, 0), 4, 0, 0),
    ((2, 0, 1), 0, 0, 8),
    ((1, 2, 0), 0, 11.5, 0),
    ((1, 0, 2), 0, 8, 8),
    ((1, 0, 2), 5, 0, 0),
    ((1, 2, 0), 5.5, 0, 0),
    ((1, 0, 2), 6, 0, 0),
    ((0, 2, 1), 0, 0, 7),
    ((2, 1, 0), 0, 8, 8),
    ((2, 0, 1), 6.5, 0, 0),
    ((2, 0, 1), 4, 0, 0),
    ((2, 0, 1), 0, 7, 0),
    ((2, 0, 1), 0, 12, 0),
    ((1, 2, 0), 0, 0, 8),
    ((1, 2, 1), 0, 10, 10),
    ((1, 2, 1), 0, 11, 0),
    ((1, 2, 1), 0, 11, 11),
    ((1, 2, 1), 0, 11.5, 0),
    ((2, 0, 1), 0, 9.5, 0),
)


@dataclass(frozen=True)
class CaseStudyParams:
    seed: int = 2009
    fleet: tuple = (5, 3, 2)
    speed: float = 60.0
    probabilities: tuple = (0.7, 0.3)
    staging_time: float = 6.5
    second_change: float = 7.5
    service: float = 0.5
    tw: float = 1.0
    region: float = 50.0
    depot: tuple = (10.0, 25.0)
    value_range: tuple = (10, 100)


def case_study(params: Optional[CaseStudyParams] = None, **overrides) -> Instance:
    """25-asset wildfire case with published requirements and impact times.

    Coordinates (km) and asset values are synthesised from ``seed``; the
    clock starts at noon, so the 6:30 pm staging time is 6.5.
    """
    p = params or CaseStudyParams()
    if overrides:
        p = replace(p, **overrides)
    rng = PCG32(p.seed, seq=11)
    st = p.staging_time
    lo, hi = p.value_range
    assets, stage1, stage2 = [], {}, ({}, {})
    for i, (req, t1, ts1, ts2) in enumerate(CASE_STUDY_TABLE, start=1):
        x = _q(rng.uniform(0.0, p.region), 3)
        y = _q(rng.uniform(0.0, p.region), 3)
        assets.append(Asset(i, (x, y), rng.randint(int(lo), int(hi)), p.service, req))
        if t1:
            o, c = window_from_impact(float(t1), p.service, p.tw)
            stage1[i] = (_q(o, 6), _q(min(c, st - p.service), 6))
        for k, tau in enumerate((ts1, ts2)):
            if tau:
                o, c = window_from_impact(float(tau), p.service, p.tw)
                stage2[k][i] = (_q(max(o, st - p.service), 6), _q(c, 6))
    depot = tuple(p.depot)
    points = [depot] + [a.location for a in assets] + [depot]
    travel = _travel(points, len(p.fleet), p.speed)
    closes = [c for _, c in stage1.values()] + [c for w in stage2 for _, c in w.values()]
    horizon = _q(max(closes) + float(travel.times.max()), 6)
    meta = {"generator": "assetprot.case_study", "seed": p.seed, "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(p).items()}}
    scen = ScenarioSet(p.probabilities, (st, p.second_change), st)
    return Instance(tuple(assets), (depot, depot), Fleet(tuple(p.fleet)), scen, travel, TimeWindows(stage1, stage2, horizon), meta)


def tiny_2asset() -> Instance:
    """Two assets, one vehicle, two scenarios; optimum 30 by hand.

    Asset 1 (value 10) is served in stage 1 over [0.5, 1.0]; asset 2
    (value 20) is at risk in both scenarios and reachable in each.
    """
    assets = (Asset(1, (3.0, 4.0), 10, 0.5, (1,)), Asset(2, (6.0, 8.0), 20, 0.5, (1,)))
    points = [(0.0, 0.0), (3.0, 4.0), (6.0, 8.0), (0.0, 0.0)]
    travel = _travel(points, 1, 10.0)
    windows = TimeWindows({1: (0.5, 1.5)}, ({2: (1.5, 3.0)}, {2: (2.0, 2.5)}), 4.0)
    scen = ScenarioSet((0.6, 0.4), (2.0, 2.5), 2.0)
    return Instance(assets, ((0.0, 0.0), (0.0, 0.0)), Fleet((1,)), scen, travel, windows, {"generator": "assetprot.tiny_2asset"})
