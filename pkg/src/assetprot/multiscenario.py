"""Two-stage model with more than two wind-change times.

Before ``TO_c`` nobody can tell scenario ``c`` from any later one, so every
asset serviced before ``TO_c`` under ``c`` must be serviced identically in
all later scenarios.  A binary ``Gamma[i,xi]`` marks those services.
"""

from __future__ import annotations

import logging
from typing import Optional

from .core import Instance, ScenarioSet, TimeWindows
from .milp.model import Sense, VarKind
from .stochastic import ArcSets, StochasticModelHandle, _bounds, build

log = logging.getLogger(__name__)


def order_scenarios(scenarios: ScenarioSet) -> tuple[ScenarioSet, tuple[int, ...]]:
    """Sort scenarios by occurrence time.

    Returns the sorted set and the permutation ``perm`` with
    ``perm[new_index] = old_index`` (both 0-based).
    """
    times = scenarios.occurrence_times
    if len(set(times)) != len(times):
        raise ValueError(f"duplicate occurrence times {times}")
    perm = tuple(sorted(range(len(times)), key=lambda k: times[k]))
    out = ScenarioSet(
        tuple(scenarios.probabilities[k] for k in perm),
        tuple(times[k] for k in perm),
        scenarios.staging_time,
    )
    return out, perm


def order_instance(instance: Instance) -> Instance:
    """Copy of ``instance`` with scenarios (and their windows) time-ordered."""
    sc, perm = order_scenarios(instance.scenarios)
    if perm == tuple(range(len(perm))):
        return instance
    w = instance.windows
    windows = TimeWindows(w.stage1, tuple(w.stage2[k] for k in perm), w.horizon)
    return Instance(instance.assets, instance.depots, instance.fleet, sc, instance.travel, windows, instance.meta)


def build_multi(instance: Instance, arcs: Optional[ArcSets] = None, name: str = "multi_scenario", freeze: bool = True) -> StochasticModelHandle:
    """Base model plus the shared-prefix coupling across scenarios 2..F.

    The base builder already uses ``TO_1`` as the staging time.  Coupling
    rows, for ``c >= 2`` and each asset at risk under ``c``:

    * ``S(c) - M(1-Gamma) <= TO_c`` and ``S(c) + M*Gamma + M(1-Y_s) >= TO_c``;
    * when ``Gamma = 1``, ``S`` and every incoming ``X`` agree with each
      later scenario ``c' > c``.

    The printed lower halves of the equality pairs read
    ``S(c) >= S(c') + M(1-Gamma)``, which cannot hold when ``Gamma = 0``;
    they are emitted as ``S(c) >= S(c') - M(1-Gamma)``.
    """
    sc = instance.scenarios
    times = sc.occurrence_times
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"occurrence times must be strictly increasing, got {times}; use order_instance")
    if sc.n_scenarios < 2:
        return build(instance, arcs, name=name, freeze=freeze)
    h = build(instance, arcs, name=name, freeze=False)
    m = h.model
    E2 = h.arcs.stage2_nodes
    F = sc.n_scenarios
    n = instance.n

    for c in range(2, F + 1):
        TO = times[c - 1]
        for i in sorted(E2[c - 1]):
            g = m.add_var(f"Gamma[{i},{c}]", VarKind.BINARY)
            h.Gamma[i, c] = g
            y = h.Y_s[i, c]
            s = h.S_s[i, c]
            lo, hi = _bounds(m, s)
            # Gamma = 1 means service starts before TO_c
            M = max(0.0, hi - TO)
            m.add_constraint([(s, 1.0), (g, M)], Sense.LE, TO + M, f"before[{i},{c}]")
            # and Gamma = 0 means at or after it, relaxed for assets not serviced under c
            M = max(0.0, TO - lo)
            m.add_constraint([(s, 1.0), (g, M), (y, -M)], Sense.GE, TO - M, f"after[{i},{c}]")
            m.add_constraint([(g, 1.0), (y, -1.0)], Sense.LE, 0.0, f"gamma_y[{i},{c}]")

    incoming: dict = {}
    for (j, i, q, xi), x in h.X_s.items():
        if i <= n:
            incoming.setdefault((i, xi), {})[j, q] = x

    for c in range(2, F + 1):
        for c2 in range(c + 1, F + 1):
            for i in sorted(E2[c - 1]):
                g = h.Gamma[i, c]
                # equal start times on the shared interval
                if (i, c2) in h.S_s:
                    a, b = h.S_s[i, c], h.S_s[i, c2]
                    alo, ahi = _bounds(m, a)
                    blo, bhi = _bounds(m, b)
                    M1 = max(0.0, ahi - blo)
                    M2 = max(0.0, bhi - alo)
                    m.add_constraint([(a, 1.0), (b, -1.0), (g, M1)], Sense.LE, M1, f"share_s_hi[{i},{c},{c2}]")
                    m.add_constraint([(a, 1.0), (b, -1.0), (g, -M2)], Sense.GE, -M2, f"share_s_lo[{i},{c},{c2}]")
                # equal flows on the shared interval; an arc absent in c2 carries zero flow there
                inc_c = incoming.get((i, c), {})
                inc_c2 = incoming.get((i, c2), {})
                for key in sorted(set(inc_c) | set(inc_c2)):
                    row = []
                    M1 = M2 = 0.0
                    if key in inc_c:
                        row.append((inc_c[key], 1.0))
                        M1 += m.variables[inc_c[key]].upper
                    if key in inc_c2:
                        row.append((inc_c2[key], -1.0))
                        M2 += m.variables[inc_c2[key]].upper
                    j, q = key
                    tag = f"{j},{i},{q},{c},{c2}"
                    if M1 > 0:
                        m.add_constraint(row + [(g, M1)], Sense.LE, M1, f"share_x_hi[{tag}]")
                    if M2 > 0:
                        m.add_constraint(row + [(g, -M2)], Sense.GE, -M2, f"share_x_lo[{tag}]")
    if freeze:
        m.freeze()
    return h
