from dataclasses import replace

import pytest

from assetprot import report
from assetprot.core import Plan
from assetprot.generator import generate
from assetprot.report import HEADER, ComparisonRow, SolverConfig, compare, compare_one, gap_pct, report_percentages, summarize, to_csv
from assetprot.stochastic import build, extract_plan
from assetprot.milp import solve_exact

GOLDEN_HEADER = (
    "fleet,assets,seed,ts_stage1_pct,ts_scenario1_pct,ts_scenario2_pct,ts_total,ts_time_s,"
    "dr_stage1_pct,dr_scenario1_pct,dr_scenario2_pct,dr_total,dr_time_s,gap_pct,ts_status,status"
)


def test_header_golden():
    assert ",".join(HEADER) == GOLDEN_HEADER
    assert to_csv([], footer=False) == GOLDEN_HEADER + "\n"


def test_published_row_gap():
    # Set1, 50 assets: 563.96 vs 532.52 is printed as 5.91
    assert gap_pct(563.96, 532.52) == pytest.approx(5.904, abs=1e-3)
    assert gap_pct(1.0, 0.0) is None


def test_two_decimal_cells():
    row = ComparisonRow("set1", 50, 1, ts_total=563.956, dr_total=532.5249, gap_pct=gap_pct(563.96, 532.52))
    line = to_csv([row], footer=False).splitlines()[1].split(",")
    cells = dict(zip(HEADER, line))
    assert cells["ts_total"] == "563.96"
    assert cells["dr_total"] == "532.52"
    assert cells["gap_pct"] == "5.90"
    assert cells["ts_stage1_pct"] == "NA"


def test_footer_names_gap_formula():
    assert to_csv([]).endswith("# gap_pct = (ts_total - dr_total) / dr_total * 100\n")


def test_empty_plan_percentages(tiny):
    assert report_percentages(tiny, Plan.empty(tiny)) == (0.0, 0.0, 0.0)


def test_full_stage1_protection(tiny):
    h = build(tiny)
    pct = report_percentages(tiny, extract_plan(h, solve_exact(h.model)))
    assert pct == (100.0, 100.0, 100.0)


def test_tiny_gap_zero(tiny):
    row = compare_one(tiny)
    assert row.status == "ok"
    assert row.gap_pct == pytest.approx(0.0)
    assert row.ts_total == pytest.approx(30.0)


def test_invalid_plan_never_emitted(tiny, monkeypatch):
    import assetprot.validator as validator

    monkeypatch.setattr(validator, "check", lambda inst, plan: ["FAKE at somewhere"])
    row = compare_one(tiny)
    assert row.status.startswith("invalid")
    assert row.ts_total is None and row.dr_total is None and row.gap_pct is None


def test_tie_recorded(tiny):
    row = compare_one(tiny.with_probabilities((0.5, 0.5)))
    assert "tie" in row.status


def test_batch_gaps_nonnegative():
    insts = [generate(n_assets=15, seed=s) for s in (1, 3)]
    rows = compare(insts, SolverConfig(time_limit=120))
    assert all(r.status.startswith("ok") for r in rows)
    assert all(r.gap_pct >= -1e-9 for r in rows)
    (mean,) = summarize(rows)
    assert mean.assets == 15 and mean.status == "ok; mean of 2"
    assert mean.ts_total == pytest.approx(sum(r.ts_total for r in rows) / 2)


def test_three_scenarios_rejected():
    from conftest import make_instance

    inst = make_instance([((3.0, 4.0), 10, (1,))], stage2=({}, {}, {}), probs=(0.5, 0.3, 0.2))
    assert compare_one(inst).status.startswith("error")


def test_summarize_skips_failed_rows():
    ok = ComparisonRow("set1", 15, 1, ts_total=10.0, dr_total=8.0)
    bad = replace(ok, seed=2, status="error: boom")
    (mean,) = summarize([ok, bad])
    assert mean.ts_total == 10.0
    assert report.gap_pct(10.0, 8.0) == pytest.approx(25.0)
