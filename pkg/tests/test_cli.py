import json

import pytest

from assetprot.cli import main
from assetprot.core import load_instance, load_plan, save_plan
from assetprot.generator import tiny_2asset


@pytest.fixture
def tiny_file(tmp_path):
    p = tmp_path / "tiny.json"
    assert main(["generate", "--kind", "tiny", "--out", str(p)]) == 0
    return p


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["generate", "--seed", "1", "--assets", "50", "--fleet", "set1", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_instance(a).n == 50


def test_generate_param_override(tmp_path):
    p = tmp_path / "g.json"
    assert main(["generate", "--assets", "12", "--param", "delay=1.5", "--out", str(p)]) == 0
    assert load_instance(p).scenarios.occurrence_times == (4.5, 6.0)


def test_unknown_param_is_bad_input(tmp_path):
    assert main(["generate", "--param", "colour=red", "--out", str(tmp_path / "x.json")]) == 3


def test_tiny_file_matches_builder(tiny_file):
    assert load_instance(tiny_file) == tiny_2asset()


def test_solve_and_validate(tmp_path, tiny_file, capsys):
    plan, lp = tmp_path / "plan.json", tmp_path / "m.lp"
    assert main(["solve", "--instance", str(tiny_file), "--plan-out", str(plan), "--lp-out", str(lp)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "optimal" and out["objective"] == pytest.approx(30.0)
    assert lp.read_text().startswith("Maximize\n")
    assert main(["validate", "--instance", str(tiny_file), "--plan", str(plan)]) == 0
    assert "0 violation(s)" in capsys.readouterr().out


def test_multi_model(tiny_file, capsys):
    assert main(["solve", "--model", "multi", "--instance", str(tiny_file)]) == 0
    assert json.loads(capsys.readouterr().out)["objective"] == pytest.approx(30.0)


def test_tampered_plan_fails_validation(tmp_path, tiny_file):
    plan = tmp_path / "plan.json"
    assert main(["solve", "--instance", str(tiny_file), "--plan-out", str(plan)]) == 0
    p = load_plan(plan)
    save_plan(type(p)(p.vehicles, p.stage1_routes, p.staging_nodes, p.stage2_routes, frozenset(), p.serviced_stage2), plan)
    assert main(["validate", "--instance", str(tiny_file), "--plan", str(plan)]) == 1


def test_reroute_report(tmp_path, tiny_file):
    rep = tmp_path / "r.json"
    assert main(["reroute", "--instance", str(tiny_file), "--report-out", str(rep)]) == 0
    d = json.loads(rep.read_text())
    assert d["expected_value"] == pytest.approx(30.0)
    assert d["violations"] == []


def test_bad_instance_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["solve", "--instance", str(bad)]) == 3
    assert main(["solve", "--instance", str(tmp_path / "missing.json")]) == 3


def test_unknown_command_is_bad_input():
    assert main(["frobnicate"]) == 3


def test_external_solver_failure(tiny_file):
    args = ["solve", "--instance", str(tiny_file), "--solver", "external", "--solver-path", "/nonexistent/cbc"]
    assert main(args) == 2


def test_firemap_csv(capsys):
    assert main(["firemap", "--assets", "5", "--seed", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "asset,x,y,scenario,impact_time,category"
    assert len(lines) == 1 + 5 * 2


def test_compare_csv(tmp_path, tiny_file):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--instances", str(tiny_file), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("fleet,assets,seed")
    assert ",0.00,optimal,ok" in rows[1]
