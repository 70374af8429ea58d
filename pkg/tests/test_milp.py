import itertools
import logging

import numpy as np
import pytest
from conftest import cbc_path, make_instance

from assetprot.milp import MilpModel, ModelError, Sense, Status, UnboundedError, VarKind, solve_exact
from assetprot.milp.lpformat import (
    SolutionFormatError,
    export_lp,
    lp_names,
    parse_external_solution,
    sanitize,
    solve_external,
)
from assetprot.stochastic import build


def one_var(kind="binary", upper=1.0):
    m = MilpModel("one")
    x = m.add_var("x", kind, 0, upper)
    m.add_constraint([(x, 1)], "<=", 1, "c0")
    m.set_objective({x: 1})
    return m.freeze()


def random_binary_model(seed, n, m):
    rng = np.random.default_rng(seed)
    model = MilpModel(f"rand{seed}")
    xs = [model.add_var(f"x[{j}]", "binary") for j in range(n)]
    A = rng.integers(-3, 8, size=(m, n))
    b = rng.integers(n, 3 * n, size=m)
    senses = rng.choice(["<=", ">="], size=m, p=[0.8, 0.2])
    for r in range(m):
        rhs = int(b[r]) if senses[r] == "<=" else int(rng.integers(0, 4))
        model.add_constraint({xs[j]: float(A[r, j]) for j in range(n)}, senses[r], rhs, f"r{r}")
    model.set_objective({xs[j]: float(rng.integers(-2, 15)) for j in range(n)})
    return model.freeze(), A, b, senses


def enumerate_best(model):
    c, A, lo, hi, *_ = model.arrays()
    A = A.toarray()
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=model.n_vars):
        x = np.array(bits)
        ax = A @ x
        if np.all(ax <= hi + 1e-9) and np.all(ax >= lo - 1e-9):
            val = float(c @ x)
            best = val if best is None else max(best, val)
    return best


def test_single_binary():
    s = solve_exact(one_var(), method="bnb")
    assert s.status is Status.OPTIMAL and s.objective == 1


def test_infeasible_pair():
    m = MilpModel()
    x = m.add_var("x", "integer", 0, 5)
    m.add_constraint([(x, 1)], ">=", 1)
    m.add_constraint([(x, 1)], "<=", 0)
    m.set_objective({x: 1})
    assert solve_exact(m.freeze(), method="bnb").status is Status.INFEASIBLE


def test_unbounded_raises():
    m = MilpModel()
    x = m.add_var("x", "continuous")
    m.set_objective({x: 1})
    with pytest.raises(UnboundedError):
        solve_exact(m.freeze(), method="bnb")


@pytest.mark.parametrize("seed", range(12))
def test_bnb_matches_enumeration(seed):
    n = 8 + seed % 9
    model, *_ = random_binary_model(seed, n, 3 + seed % 4)
    ref = enumerate_best(model)
    got = solve_exact(model, method="bnb")
    if ref is None:
        assert got.status is Status.INFEASIBLE
    else:
        assert got.status is Status.OPTIMAL
        assert got.objective == pytest.approx(ref, abs=1e-6)
        assert not model.violations(got.values)


def test_highs_agrees_with_bnb():
    for seed in range(5):
        model, *_ = random_binary_model(100 + seed, 14, 5)
        a, b = solve_exact(model, method="bnb"), solve_exact(model, method="highs")
        assert a.status == b.status
        if a.objective is not None:
            assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_incumbents_nondecreasing():
    model, *_ = random_binary_model(3, 16, 6)
    s = solve_exact(model, method="bnb")
    objs = [o for _, o in s.incumbents]
    assert objs == sorted(objs)
    assert objs[-1] == pytest.approx(s.objective)


def test_node_limit_reports_bound():
    model, *_ = random_binary_model(11, 18, 6)
    s = solve_exact(model, method="bnb", node_limit=1)
    assert s.status in (Status.FEASIBLE, Status.TIME_LIMIT, Status.OPTIMAL)
    if s.status is Status.FEASIBLE:
        assert s.bound >= s.objective - 1e-9


def test_tiny_app_model_one_asset():
    inst = make_instance([((3.0, 4.0), 10, (1,))], stage1={1: (0.5, 1.5)})
    s = solve_exact(build(inst).model, method="bnb")
    assert s.objective == pytest.approx(10.0)


def test_empty_model_is_zero():
    s = solve_exact(MilpModel().freeze())
    assert s.status is Status.OPTIMAL and s.objective == 0


def test_auto_dispatch_and_bad_method():
    assert solve_exact(one_var()).solver == "bnb"
    with pytest.raises(ValueError):
        solve_exact(one_var(), method="simplex")


def test_model_guards():
    m = MilpModel()
    x = m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constraint([(x, float("inf"))], "<=", 1)
    with pytest.raises(ModelError):
        m.add_constraint([(5, 1.0)], "<=", 1)
    with pytest.raises(ModelError):
        m.add_var("y", lower=2, upper=1)
    m.freeze()
    with pytest.raises(ModelError):
        m.add_var("z")


# --- LP text ---------------------------------------------------------------


def test_lp_golden_one_variable():
    m = MilpModel()
    x = m.add_var("x", "continuous", 0)
    m.add_constraint([(x, 1)], "<=", 1, "c0")
    m.set_objective({x: 1})
    assert export_lp(m.freeze()) == "Maximize\n obj: x\nSubject To\n c0: x <= 1\nEnd\n"


def test_lp_sections_and_bounds():
    m = MilpModel()
    y = m.add_var("Y_f[3]", "binary")
    k = m.add_var("X[0,3,1]", "integer", 0, 2)
    s = m.add_var("S[3]", "continuous", 0.5, 2.25)
    m.add_constraint([(k, 1), (y, -2)], "=", 0, "sync[3,1]")
    m.add_constraint([(s, 1), (y, -1.5)], ">=", -1, "time")
    m.set_objective({y: 10})
    assert export_lp(m.freeze()) == (
        "Maximize\n obj: 10 Y_f(3)\nSubject To\n sync(3,1): X(0,3,1) - 2 Y_f(3) = 0\n time: S(3) - 1.5 Y_f(3) >= -1\n"
        "Bounds\n 0 <= X(0,3,1) <= 2\n 0.5 <= S(3) <= 2.25\nGenerals\n X(0,3,1)\nBinaries\n Y_f(3)\nEnd\n"
    )


@pytest.mark.parametrize("label, expected", [("a b", "a_b"), ("2x", "_2x"), ("w[i*j]", "w(i_j)"), (".x", "_.x")])
def test_sanitize(label, expected):
    assert sanitize(label) == expected


def test_sanitized_collisions_get_suffix():
    m = MilpModel()
    m.add_var("a b")
    m.add_var("a_b")
    assert lp_names(m) == ["a_b", "a_b_1"]


def test_export_deterministic(tiny):
    assert export_lp(build(tiny).model) == export_lp(build(tiny).model)


def test_long_rows_wrap():
    m = MilpModel()
    xs = [m.add_var(f"variable_with_long_name_{j}") for j in range(40)]
    m.add_constraint({x: 1.0 for x in xs}, "<=", 3, "wide")
    m.set_objective({xs[0]: 1})
    assert max(len(line) for line in export_lp(m.freeze()).splitlines()) <= 200


# --- solution files --------------------------------------------------------


def _tiny_solution_text(model, sol, drop=()):
    names = lp_names(model)
    rows = [f"Optimal - objective value {sol.objective:.8f}"]
    rows += [f"{j} {names[j]} {v:.10g} 0" for j, v in enumerate(sol.values) if v != 0 and j not in drop]
    return "\n".join(rows) + "\n"


def test_parse_matches_solve_exact(tiny):
    model = build(tiny).model
    ref = solve_exact(model)
    parsed = parse_external_solution(_tiny_solution_text(model, ref), model)
    assert parsed.status is Status.OPTIMAL
    assert parsed.objective == pytest.approx(ref.objective, abs=1e-6)


def test_missing_variable_defaults_to_zero(tiny, caplog):
    model = build(tiny).model
    ref = solve_exact(model)
    nz = [j for j, v in enumerate(ref.values) if v != 0]
    with caplog.at_level(logging.WARNING):
        parsed = parse_external_solution(_tiny_solution_text(model, ref, drop={nz[0]}), model)
    assert parsed.values[nz[0]] == 0
    assert "absent" in caplog.text


def test_objective_only_file_rejected(tiny):
    with pytest.raises(SolutionFormatError):
        parse_external_solution("Optimal - objective value 30\n", build(tiny).model)


@pytest.mark.parametrize(
    "text",
    ["", "Weird status\n", "Optimal - objective value 1\n0 nosuchvar 1 0\n", "Optimal - objective value 1\nnot a row\n"],
)
def test_malformed_solution_files(text):
    with pytest.raises(SolutionFormatError):
        parse_external_solution(text, one_var())


def test_infeasible_and_stopped_status():
    m = one_var()
    assert parse_external_solution("Infeasible - objective value 0\n", m).status is Status.INFEASIBLE
    assert parse_external_solution("Stopped on time - no integer solution\n", m).status is Status.TIME_LIMIT
    s = parse_external_solution("Stopped on time - objective value 1\n0 x 1 0\n", m)
    assert s.status is Status.FEASIBLE and s.objective == 1


@pytest.mark.skipif(cbc_path() is None, reason="no external LP solver configured")
def test_external_round_trip(tiny):
    model = build(tiny).model
    ext = solve_external(model, solver=cbc_path(), time_limit=60)
    assert ext.status is Status.OPTIMAL
    assert ext.objective == pytest.approx(solve_exact(model).objective, abs=1e-6)


def test_missing_external_solver(monkeypatch):
    monkeypatch.delenv("ASSETPROT_LP_SOLVER", raising=False)
    monkeypatch.setenv("PATH", "/nonexistent")
    with pytest.raises(RuntimeError):
        solve_external(one_var())


def test_sense_values():
    assert {s.value for s in Sense} == {"<=", ">=", "="}
    assert VarKind("binary") is VarKind.BINARY
