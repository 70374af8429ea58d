"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import functools
import hashlib
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import cbc_path  # noqa: E402

from assetprot import bundled_instance  # noqa: E402
from assetprot.cli import main as cli_main  # noqa: E402
from assetprot.core import evaluate  # noqa: E402
from assetprot.firespread import FireModel, impact_time  # noqa: E402
from assetprot.generator import generate, micro_suite  # noqa: E402
from assetprot.milp import Status, solve_exact  # noqa: E402
from assetprot.milp.lpformat import solve_external  # noqa: E402
from assetprot.multiscenario import build_multi  # noqa: E402
from assetprot.report import gap_pct, report_percentages  # noqa: E402
from assetprot.rerouting import build_deterministic, dynamic_reroute  # noqa: E402
from assetprot.stochastic import assignment_from_plan, build, extract_plan  # noqa: E402
from assetprot.validator import brute_force_optimum, check  # noqa: E402

TOL = 1e-6
RESULTS: dict[int, str] = {}

# criterion 2 design, fixed before any run: seed k+1 for the k-th instance
SIZES_C2 = [15] * 4 + [17] * 4 + [19] * 3 + [21] * 3 + [23] * 3 + [25] * 3
# sha256 of `generate --seed 1 --assets 50 --fleet set1` recorded on linux x86-64
GENERATE_SHA256 = "dca44353f87abff092d28c3b8ad562b5a2b15b730aff5f769e1280b4309dfa1a"


def record(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[k] = line
    print(line)
    return ok


def solved_plan(handle, solution):
    """(violations, |evaluate - objective|) for one solver run."""
    plan = extract_plan(handle, solution)
    return len(check(handle.instance, plan)), abs(evaluate(handle.instance, plan).expected_total - solution.objective)


# --- cached runs shared with criterion 5 -----------------------------------


@functools.lru_cache(maxsize=None)
def run_c1():
    t0 = time.perf_counter()
    rows = []
    for inst in micro_suite(50):
        h = build(inst)
        s = solve_exact(h.model)
        rows.append((s.objective, brute_force_optimum(inst), *solved_plan(h, s)))
    return rows, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def run_c2():
    rows = []
    for k, n in enumerate(SIZES_C2):
        inst = generate(n_assets=n, seed=k + 1, fleet="set1")
        dr = dynamic_reroute(inst, time_limit=300)
        h = build(inst)
        s = solve_exact(h.model, time_limit=300, incumbent=assignment_from_plan(h, dr.plan))
        viol, diff = solved_plan(h, s)
        dr_viol = len(check(inst, dr.plan))
        dr_diff = abs(evaluate(inst, dr.plan).expected_total - dr.expected_value)
        rows.append((n, k + 1, s.status, s.objective, dr.expected_value, viol + dr_viol, max(diff, dr_diff)))
    return rows


@functools.lru_cache(maxsize=None)
def run_c3():
    a_rows, b_rows = [], []
    for inst in micro_suite(10, seed0=1000, n_scenarios=1):
        h = build(inst)
        s = solve_exact(h.model)
        w = {**inst.windows.stage1, **inst.windows.scenario(1)}
        dh = build_deterministic(inst, list(w), w)
        ds = solve_exact(dh.model)
        a_rows.append((s.objective, ds.objective, *solved_plan(h, s)))
    for inst in micro_suite(20, seed0=2000):
        hb, hm = build(inst), build_multi(inst)
        sb, sm = solve_exact(hb.model), solve_exact(hm.model)
        vb, db = solved_plan(hb, sb)
        vm, dm = solved_plan(hm, sm)
        b_rows.append((sb.objective, sm.objective, vb + vm, max(db, dm)))
    return a_rows, b_rows


# --- fire-spread oracle ----------------------------------------------------

SCHEDULE = ((4.5, 19.0, 17.0), (6.5, 21.0, 19.0))
V0 = (14.0, 16.0)


def oracle_inside(dx, dy, t, scenario):
    change, vx, vy = SCHEDULE[scenario - 1]
    if t <= change:
        rx, ry = V0[0] * t, V0[1] * t
    else:
        rx, ry = V0[0] * change + vx * (t - change), V0[1] * change + vy * (t - change)
    if dx == 0 and dy == 0:
        return True
    return rx > 0 and ry > 0 and (dx / rx) ** 2 + (dy / ry) ** 2 <= 1.0


def oracle_time(dx, dy, scenario, horizon):
    if not oracle_inside(dx, dy, horizon, scenario):
        return None
    lo, hi = 0.0, horizon
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if oracle_inside(dx, dy, mid, scenario) else (mid, hi)
    return hi


# --- criteria ---------------------------------------------------------------


def check_c1():
    rows, elapsed = run_c1()
    worst = max(abs(a - b) for a, b, *_ in rows)
    ok = worst <= TOL and elapsed < 120
    return record(1, ok, f"50 micro instances, max |milp - brute force| = {worst:.1e}, {elapsed:.1f} s")


def check_c2():
    rows = run_c2()
    gaps = [gap_pct(ts, dr) for _, _, _, ts, dr, *_ in rows]
    dominated = all(ts >= dr - TOL for _, _, _, ts, dr, *_ in rows)
    mean_gap = sum(gaps) / len(gaps)
    sizes = sorted(set(SIZES_C2))
    means = [np.mean([g for (n, *_), g in zip(rows, gaps) if n == size]) for size in sizes]
    inversions = sum(1 for a, b in zip(means, means[1:]) if b < a)
    statuses = sorted({st.value for _, _, st, *_ in rows})
    ok = dominated and mean_gap > 0 and inversions <= 1
    trend = ", ".join(f"n={s}: {m:.2f}" for s, m in zip(sizes, means))
    return record(
        2,
        ok,
        f"dominance {'holds' if dominated else 'broken'} on 20 seeds, mean gap {mean_gap:.2f}%, "
        f"{inversions} inversion(s) in bucket means [{trend}], statuses {statuses}",
    )


def check_c3():
    a_rows, b_rows = run_c3()
    wa = max(abs(x - y) for x, y, *_ in a_rows)
    wb = max(abs(x - y) for x, y, *_ in b_rows)
    ok = wa <= TOL and wb <= TOL
    return record(3, ok, f"(a) F=1 vs deterministic on 10, max diff {wa:.1e}; (b) multi vs base on 20, max diff {wb:.1e}")


def check_c4():
    rng = np.random.default_rng(4)
    ign = (5.0, -55.0)
    model = FireModel.wind_change(ign, V0, SCHEDULE)
    horizon = 8.0
    worst, compared = 0.0, 0
    for _ in range(1000):
        p = (float(rng.uniform(-120, 130)), float(rng.uniform(-190, 90)))
        xi = int(rng.integers(1, 3))
        got = impact_time(p, model, xi, horizon)
        ref = oracle_time(p[0] - ign[0], p[1] - ign[1], xi, horizon)
        if (got is None) != (ref is None):
            worst = math.inf
            continue
        if got is not None:
            compared += 1
            worst = max(worst, abs(got - ref))
    # continuity: points straddling the ellipse reached exactly at the change
    jump = 0.0
    for theta in rng.uniform(0, 2 * math.pi, 200):
        base = (V0[0] * 4.5 * math.cos(theta), V0[1] * 4.5 * math.sin(theta))
        for xi in (1, 2):
            lo = impact_time((ign[0] + base[0] * (1 - 1e-9), ign[1] + base[1] * (1 - 1e-9)), model, xi)
            hi = impact_time((ign[0] + base[0] * (1 + 1e-9), ign[1] + base[1] * (1 + 1e-9)), model, xi)
            jump = max(jump, abs(hi - lo), abs(lo - 4.5), abs(hi - 4.5))
    ok = worst <= TOL and jump <= TOL and 0 < compared < 1000
    return record(4, ok, f"1000 points ({compared} impacted), max |closed form - bisection| = {worst:.1e}, max jump at ST {jump:.1e}")


def check_c5():
    rows1, _ = run_c1()
    a_rows, b_rows = run_c3()
    rows2 = run_c2()
    viol = sum(r[2] for r in rows1) + sum(r[2] for r in a_rows) + sum(r[2] for r in b_rows) + sum(r[5] for r in rows2)
    diff = max([r[3] for r in rows1] + [r[3] for r in a_rows] + [r[3] for r in b_rows] + [r[6] for r in rows2])
    plans = len(rows1) + len(a_rows) + 2 * len(b_rows) + 2 * len(rows2)
    ok = viol == 0 and diff <= TOL
    return record(5, ok, f"{plans} plans, {viol} violations, max |evaluate - objective| = {diff:.1e}")


def check_c6(tmpdir):
    files = [Path(tmpdir) / f"run{k}.json" for k in (1, 2)]
    codes = [cli_main(["generate", "--seed", "1", "--assets", "50", "--fleet", "set1", "--out", str(f)]) for f in files]
    same = files[0].read_bytes() == files[1].read_bytes()
    digest = hashlib.sha256(files[0].read_bytes()).hexdigest()
    ok = codes == [0, 0] and same and digest == GENERATE_SHA256
    return record(6, ok, f"two runs {'identical' if same else 'differ'}, sha256 {digest[:12]}... {'matches' if digest == GENERATE_SHA256 else 'differs from'} the recorded digest")


def check_c7():
    inst = bundled_instance("blacksaturday")
    t0 = time.perf_counter()
    dr = dynamic_reroute(inst, time_limit=3600)
    h = build(inst)
    s = solve_exact(h.model, time_limit=3600, incumbent=assignment_from_plan(h, dr.plan))
    elapsed = time.perf_counter() - t0
    plan = extract_plan(h, s)
    bad = check(inst, plan)
    pct = report_percentages(inst, plan)
    ok = s.status is Status.OPTIMAL and not bad and len(pct) == 3 and all(p is not None for p in pct) and elapsed < 3600
    shown = ", ".join(f"{p:.0f}%" for p in pct)
    return record(7, ok, f"{s.status.value} {s.objective:.2f} via {s.solver} in {elapsed:.1f} s, {len(bad)} violations, protected {shown}")


def check_c8():
    solver = cbc_path()
    if solver is None:
        RESULTS[8] = "criterion 8: SKIP (no external LP solver configured)"
        print(RESULTS[8])
        return None
    worst = 0.0
    for inst in micro_suite(10, seed0=3000):
        model = build(inst).model
        ext = solve_external(model, solver=solver, time_limit=120)
        ref = solve_exact(model)
        worst = max(worst, abs(ext.objective - ref.objective) if ext.objective is not None else math.inf)
    return record(8, worst <= TOL, f"10 micro instances through {Path(solver).name}, max |external - solve_exact| = {worst:.1e}")


# --- pytest entry points -----------------------------------------------------


def test_criterion_1_oracle_equivalence():
    assert check_c1(), RESULTS[1]


@pytest.mark.slow
def test_criterion_2_dominance_over_rerouting():
    assert check_c2(), RESULTS[2]


def test_criterion_3_reductions():
    assert check_c3(), RESULTS[3]


def test_criterion_4_fire_spread():
    assert check_c4(), RESULTS[4]


@pytest.mark.slow
def test_criterion_5_validation_soundness():
    assert check_c5(), RESULTS[5]


def test_criterion_6_determinism(tmp_path):
    assert check_c6(tmp_path), RESULTS[6]


@pytest.mark.slow
def test_criterion_7_case_study():
    assert check_c7(), RESULTS[7]


def test_criterion_8_lp_bridge():
    if check_c8() is None:
        pytest.skip("no external LP solver configured")
    assert RESULTS[8].startswith("criterion 8: PASS"), RESULTS[8]


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        outcomes = [check_c1(), check_c2(), check_c3(), check_c4(), check_c5(), check_c6(tmp), check_c7(), check_c8()]
    print()
    for k in sorted(RESULTS):
        print(RESULTS[k])
    sys.exit(0 if all(o is not False for o in outcomes) else 1)
