"""Piecewise elliptical fire growth, impact times, windows and risk categories.

The front is an axis-aligned ellipse centred on the ignition point.  Each
scenario is an ordered list of phases; during a phase both semi-axes grow
linearly at that phase's velocities, starting from their values at the phase
boundary, so the front never jumps when the wind changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import Asset, ScenarioSet, TimeWindows

SAME_TIME_TOL = 1e-9


@dataclass(frozen=True)
class FirePhase:
    start_time: float
    vx: float
    vy: float

    def __post_init__(self):
        if not (self.vx > 0 and self.vy > 0):
            raise ValueError(f"phase velocities must be positive, got ({self.vx}, {self.vy})")


@dataclass(frozen=True)
class FireModel:
    ignition: tuple[float, float]
    phases: tuple[tuple[FirePhase, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(tuple(p) for p in self.phases))
        if not self.phases:
            raise ValueError("at least one scenario is required")
        first = self.phases[0][0]
        for seq in self.phases:
            if seq[0] != first or first.start_time != 0.0:
                raise ValueError("phase 1 must start at 0 and be shared by all scenarios")
            if any(b.start_time <= a.start_time for a, b in zip(seq, seq[1:])):
                raise ValueError("phase start times must be strictly increasing")

    @classmethod
    def wind_change(cls, ignition, initial: tuple[float, float], changes: Sequence[tuple[float, float, float]]) -> "FireModel":
        """One scenario per ``(change_time, vx, vy)`` entry, all sharing ``initial`` before their change."""
        p0 = FirePhase(0.0, *initial)
        return cls(tuple(ignition), tuple((p0, FirePhase(float(t), vx, vy)) for t, vx, vy in changes))

    @property
    def n_scenarios(self) -> int:
        return len(self.phases)

    def axes(self, t: float, scenario: int) -> tuple[float, float]:
        """Semi-axes ``(Rx, Ry)`` at time ``t`` under ``scenario`` (1-based)."""
        rx = ry = 0.0
        seq = self.phases[scenario - 1]
        for k, ph in enumerate(seq):
            end = seq[k + 1].start_time if k + 1 < len(seq) else math.inf
            span = max(0.0, min(t, end) - ph.start_time)
            rx += ph.vx * span
            ry += ph.vy * span
            if t <= end:
                break
        return rx, ry

    def contains(self, point, t: float, scenario: int) -> bool:
        dx, dy = point[0] - self.ignition[0], point[1] - self.ignition[1]
        if dx == 0 and dy == 0:
            return True
        rx, ry = self.axes(t, scenario)
        if rx <= 0 or ry <= 0:
            return False
        return (dx / rx) ** 2 + (dy / ry) ** 2 <= 1.0


def _phase_root(dx: float, dy: float, rx0: float, ry0: float, vx: float, vy: float, span: float) -> float:
    """Smallest s in [0, span] with (dx/(rx0+vx s))^2 + (dy/(ry0+vy s))^2 = 1."""
    if rx0 == 0.0 and ry0 == 0.0:
        return math.hypot(dx / vx, dy / vy)
    px, py = Polynomial([rx0, vx]), Polynomial([ry0, vy])
    g = px**2 * py**2 - dx**2 * py**2 - dy**2 * px**2
    roots = g.roots()
    upper = span if math.isfinite(span) else math.inf
    cands = sorted(r.real for r in np.atleast_1d(roots) if abs(r.imag) <= 1e-7 * (1 + abs(r.real)) and -1e-9 <= r.real <= upper + 1e-9)
    s = cands[0] if cands else 0.0
    # Newton polish on the inclusion function; f is strictly decreasing in s
    for _ in range(6):
        rx, ry = rx0 + vx * s, ry0 + vy * s
        f = (dx / rx) ** 2 + (dy / ry) ** 2 - 1.0
        df = -2 * dx**2 * vx / rx**3 - 2 * dy**2 * vy / ry**3
        if df == 0:
            break
        step = f / df
        s -= step
        if abs(step) < 1e-15 * (1 + s):
            break
    return min(max(s, 0.0), upper)


def impact_time(point, model: FireModel, scenario: int, horizon: float = math.inf) -> Optional[float]:
    """Earliest time the front reaches ``point``, or ``None`` if later than ``horizon``."""
    dx, dy = float(point[0] - model.ignition[0]), float(point[1] - model.ignition[1])
    if dx == 0 and dy == 0:
        return 0.0
    seq = model.phases[scenario - 1]
    rx = ry = 0.0
    for k, ph in enumerate(seq):
        end = seq[k + 1].start_time if k + 1 < len(seq) else math.inf
        span = end - ph.start_time
        rx_end, ry_end = rx + ph.vx * span, ry + ph.vy * span
        if not math.isfinite(span) or (dx / rx_end) ** 2 + (dy / ry_end) ** 2 <= 1.0:
            t = ph.start_time + _phase_root(dx, dy, rx, ry, ph.vx, ph.vy, span)
            return t if t <= horizon else None
        rx, ry = rx_end, ry_end
        if ph.start_time > horizon:
            return None
    return None


def impact_time_bisection(point, model: FireModel, scenario: int, horizon: float, tol: float = 1e-12) -> Optional[float]:
    """Reference impact time by bisection on the inclusion predicate."""
    if not model.contains(point, horizon, scenario):
        return None
    lo, hi = 0.0, horizon
    if model.contains(point, lo, scenario):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if model.contains(point, mid, scenario):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RiskCategory:
    """``stage1`` assets are hit before the staging time in every scenario;
    otherwise ``scenarios`` lists the scenarios in which the asset is hit."""

    stage1: bool
    scenarios: frozenset
    n_scenarios: int

    @property
    def label(self) -> str:
        if self.stage1:
            return "Stage1"
        if not self.scenarios:
            return "NotAtRisk"
        if len(self.scenarios) == self.n_scenarios and self.n_scenarios > 1:
            return "BothScenarios" if self.n_scenarios == 2 else "AllScenarios"
        return "Scenario(" + ",".join(str(s) for s in sorted(self.scenarios)) + ")"


def impact_table(points, model: FireModel, horizon: float) -> np.ndarray:
    """``(n, F)`` impact times with ``nan`` where the front does not arrive by ``horizon``."""
    out = np.full((len(points), model.n_scenarios), np.nan)
    for k, p in enumerate(points):
        for xi in range(1, model.n_scenarios + 1):
            t = impact_time(p, model, xi, horizon)
            if t is not None:
                out[k, xi - 1] = t
    return out


def _category(times: Sequence[float], staging_time: float) -> RiskCategory:
    F = len(times)
    hit = [not math.isnan(t) for t in times]
    if all(hit) and max(times) - min(times) <= SAME_TIME_TOL and max(times) <= staging_time:
        return RiskCategory(True, frozenset(), F)
    return RiskCategory(False, frozenset(xi for xi, h in enumerate(hit, start=1) if h), F)


def classify(assets: Sequence[Asset], model: FireModel, scenario_set: ScenarioSet, horizon: float) -> dict[int, RiskCategory]:
    times = impact_table([a.location for a in assets], model, horizon)
    return {a.id: _category(row, scenario_set.staging_time) for a, row in zip(assets, times)}


@dataclass(frozen=True)
class DerivedWindows:
    windows: TimeWindows
    impact_times: Mapping[int, tuple[Optional[float], ...]]
    categories: Mapping[int, RiskCategory]
    dropped: tuple[tuple[int, str], ...]


def window_from_impact(tau: float, service: float, length: float) -> tuple[float, float]:
    close = tau - service
    return max(0.0, close - length), close


def derive_windows(
    assets: Sequence[Asset],
    model: FireModel,
    scenario_set: ScenarioSet,
    *,
    tw1: float,
    tw2: float,
    fire_horizon: float,
    horizon: Optional[float] = None,
) -> DerivedWindows:
    """Service windows from impact times.

    Service must finish before the front arrives: ``close = tau - a`` and
    ``open = max(0, close - TW)``.  Stage-1 windows also finish by the staging
    time; stage-2 windows open no earlier than ``ST - a`` so service ends after
    the scenario is revealed.  Windows that become empty are dropped and
    reported as ``(asset, context)``.
    """
    st = scenario_set.staging_time
    table = impact_table([a.location for a in assets], model, fire_horizon)
    stage1: dict[int, tuple[float, float]] = {}
    stage2: list[dict[int, tuple[float, float]]] = [{} for _ in range(model.n_scenarios)]
    dropped = []
    cats = {}
    impacts = {}
    for a, row in zip(assets, table):
        cat = _category(row, st)
        cats[a.id] = cat
        impacts[a.id] = tuple(None if math.isnan(t) else float(t) for t in row)
        if cat.stage1:
            o, c = window_from_impact(float(row[0]), a.service_duration, tw1)
            c = min(c, st - a.service_duration)
            if c < o or c < 0:
                dropped.append((a.id, "stage1"))
            else:
                stage1[a.id] = (o, c)
            continue
        for xi in sorted(cat.scenarios):
            o, c = window_from_impact(float(row[xi - 1]), a.service_duration, tw2)
            o = max(o, st - a.service_duration)
            if c < o or c < 0:
                dropped.append((a.id, f"scenario {xi}"))
            else:
                stage2[xi - 1][a.id] = (o, c)
    closes = [c for _, c in stage1.values()] + [c for w in stage2 for _, c in w.values()]
    hz = horizon if horizon is not None else max(closes, default=0.0)
    windows = TimeWindows(stage1, tuple(stage2), hz)
    return DerivedWindows(windows, impacts, cats, tuple(dropped))


class EllipticalFireSpread(TransformerMixin, BaseEstimator):
    """Map asset coordinates to per-scenario impact times.

    ``transform`` takes an ``(n, 2)`` array of locations and returns an
    ``(n, F)`` array of impact times, ``nan`` where the front does not arrive
    within ``horizon``.
    """

    def __init__(self, ignition=(0.0, 0.0), initial_velocity=(14.0, 16.0), changes=((4.5, 19.0, 17.0), (6.5, 21.0, 19.0)), horizon=math.inf):
        self.ignition = ignition
        self.initial_velocity = initial_velocity
        self.changes = changes
        self.horizon = horizon

    def fit(self, X=None, y=None):
        if X is not None:
            check_array(X)
        self.model_ = FireModel.wind_change(tuple(self.ignition), tuple(self.initial_velocity), list(self.changes))
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected (n, 2) coordinates, got {X.shape}")
        return impact_table(X, self.model_, self.horizon)
