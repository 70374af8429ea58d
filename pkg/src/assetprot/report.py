"""Two-stage versus rerouting comparison, laid out like the published table."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, Sequence

from .core import Instance, Plan, evaluate

log = logging.getLogger(__name__)

GAP_NOTE = "gap_pct = (ts_total - dr_total) / dr_total * 100"


def report_percentages(instance: Instance, plan: Plan) -> tuple[Optional[float], ...]:
    """Stage-1, scenario-1, scenario-2 ... percentages of at-risk value protected.

    A pool is every asset holding a window in that context, so an asset at
    risk in both scenarios counts in both scenario pools.  ``None`` marks an
    empty pool.
    """
    ev = evaluate(instance, plan)
    return (ev.stage1_pct, *ev.stage2_pct)


def gap_pct(ts_total: float, dr_total: float) -> Optional[float]:
    if dr_total <= 0:
        return None
    return (ts_total - dr_total) / dr_total * 100.0


@dataclass
class ComparisonRow:
    fleet: str
    assets: int
    seed: Optional[int]
    ts_stage1_pct: Optional[float] = None
    ts_scenario1_pct: Optional[float] = None
    ts_scenario2_pct: Optional[float] = None
    ts_total: Optional[float] = None
    ts_time_s: Optional[float] = None
    dr_stage1_pct: Optional[float] = None
    dr_scenario1_pct: Optional[float] = None
    dr_scenario2_pct: Optional[float] = None
    dr_total: Optional[float] = None
    dr_time_s: Optional[float] = None
    gap_pct: Optional[float] = None
    ts_status: str = ""
    status: str = "ok"


HEADER = [f.name for f in fields(ComparisonRow)]


@dataclass(frozen=True)
class SolverConfig:
    time_limit: Optional[float] = 300.0
    method: str = "auto"


def _fleet_name(instance: Instance) -> str:
    params = instance.meta.get("params", {}) if isinstance(instance.meta, dict) else {}
    fleet = params.get("fleet")
    if isinstance(fleet, str):
        return fleet
    return "(" + ",".join(str(k) for k in instance.fleet.counts) + ")"


def compare_one(instance: Instance, config: SolverConfig = SolverConfig()) -> ComparisonRow:
    """Run both pipelines on one instance and validate both plans."""
    from .milp.bnb import solve_exact
    from .rerouting import dynamic_reroute
    from .stochastic import assignment_from_plan, build, extract_plan
    from .validator import check

    row = ComparisonRow(_fleet_name(instance), instance.n, instance.meta.get("seed"))
    if instance.scenarios.n_scenarios != 2:
        row.status = "error: comparison needs two scenarios"
        return row
    try:
        t0 = time.perf_counter()
        dr = dynamic_reroute(instance, time_limit=config.time_limit, method=config.method)
        dr_time = time.perf_counter() - t0
        t0 = time.perf_counter()
        h = build(instance)
        seed = assignment_from_plan(h, dr.plan)
        sol = solve_exact(h.model, time_limit=config.time_limit, method=config.method, incumbent=seed)
        ts_time = time.perf_counter() - t0
        if sol.values is None:
            row.status = f"error: two-stage solve {sol.status.value}"
            return row
        plan = extract_plan(h, sol)
    except Exception as exc:  # recorded as a row, the batch continues
        log.exception("comparison failed for n=%d", instance.n)
        row.status = f"error: {exc}"
        return row
    bad = check(instance, plan) + check(instance, dr.plan)
    if bad:
        row.status = f"invalid: {bad[0]}"
        return row
    ts = report_percentages(instance, plan)
    drp = report_percentages(instance, dr.plan)
    ts_total = evaluate(instance, plan).expected_total
    row.ts_stage1_pct, row.ts_scenario1_pct, row.ts_scenario2_pct = ts
    row.dr_stage1_pct, row.dr_scenario1_pct, row.dr_scenario2_pct = drp
    row.ts_total, row.ts_time_s = ts_total, ts_time
    row.dr_total, row.dr_time_s = dr.expected_value, dr_time
    row.gap_pct = gap_pct(ts_total, dr.expected_value)
    row.ts_status = sol.status.value
    if dr.tie_break:
        row.status = "ok; tie P(1)=P(2), planned for scenario 1"
    return row


def compare(instances: Sequence[Instance], config: SolverConfig = SolverConfig(), workers: int = 1) -> list[ComparisonRow]:
    if workers > 1 and len(instances) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(compare_one, instances, [config] * len(instances)))
    return [compare_one(inst, config) for inst in instances]


def summarize(rows: Iterable[ComparisonRow]) -> list[ComparisonRow]:
    """Mean of the ``ok`` rows per (fleet, assets), one row per group."""
    groups: dict = {}
    for r in rows:
        if r.status.startswith("ok"):
            groups.setdefault((r.fleet, r.assets), []).append(r)
    out = []
    numeric = [f for f in HEADER if f not in ("fleet", "assets", "seed", "ts_status", "status")]
    for (fleet, n), rs in sorted(groups.items()):
        agg = ComparisonRow(fleet, n, None, status=f"ok; mean of {len(rs)}")
        for f in numeric:
            vals = [getattr(r, f) for r in rs if getattr(r, f) is not None]
            setattr(agg, f, sum(vals) / len(vals) if vals else None)
        agg.gap_pct = gap_pct(agg.ts_total, agg.dr_total) if agg.dr_total else None
        agg.ts_status = ",".join(sorted({r.ts_status for r in rs}))
        out.append(agg)
    return out


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def to_csv(rows: Iterable[ComparisonRow], footer: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_cell(v) for v in asdict(r).values()])
    if footer:
        buf.write(f"# {GAP_NOTE}\n")
    return buf.getvalue()
