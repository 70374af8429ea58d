"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 solver failure, 3 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from .core import (
    InstanceError,
    InstanceFormatError,
    dumps_canonical,
    evaluation_to_dict,
    instance_to_dict,
    load_instance,
    load_plan,
    plan_to_dict,
)

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3

log = logging.getLogger("assetprot")


class InputError(Exception):
    pass


def _write(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return dumps_canonical(obj) + "\n"


def _parse_params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise InputError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out[key.strip()] = tuple(value) if isinstance(value, list) else value
    return out


def _load(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc


# --- commands -------------------------------------------------------------


def cmd_generate(args) -> int:
    from .generator import CaseStudyParams, GeneratorParams, MicroParams, case_study, generate, generate_micro, tiny_2asset

    extra = _parse_params(args.param)
    try:
        if args.kind == "benchmark":
            kw = {"seed": args.seed if args.seed is not None else 1, "n_assets": args.assets or 50, "fleet": args.fleet, **extra}
            _check_keys(GeneratorParams, kw)
            inst = generate(**kw)
        elif args.kind == "micro":
            kw = {"seed": args.seed if args.seed is not None else 0, "n_assets": args.assets or 4, **extra}
            _check_keys(MicroParams, kw)
            inst = generate_micro(**kw)
        elif args.kind == "case-study":
            kw = dict(extra)
            if args.seed is not None:
                kw["seed"] = args.seed
            _check_keys(CaseStudyParams, kw)
            inst = case_study(**kw)
        else:
            inst = tiny_2asset()
        inst.validate()
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    _write(_json(instance_to_dict(inst)), args.out)
    return EXIT_OK


def _check_keys(cls, kw):
    known = {f.name for f in fields(cls)}
    bad = sorted(set(kw) - known)
    if bad:
        raise InputError(f"unknown parameter(s) {', '.join(bad)}; known: {', '.join(sorted(known))}")


def _solve_model(model, args, incumbent=None):
    from .milp.bnb import solve_exact
    from .milp.lpformat import DEFAULT_TEMPLATE, solve_external

    if args.solver == "external":
        return solve_external(model, solver=args.solver_path, template=args.solver_cmd or DEFAULT_TEMPLATE, time_limit=args.time_limit)
    method = "auto" if args.solver == "builtin" else args.solver
    return solve_exact(model, time_limit=args.time_limit, method=method, incumbent=incumbent)


def cmd_solve(args) -> int:
    from .milp.lpformat import export_lp
    from .multiscenario import build_multi, order_instance
    from .stochastic import assignment_from_plan, build, extract_plan
    from .validator import check
    from .core import evaluate

    inst = _load(args.instance)
    if args.model == "multi":
        try:
            inst = order_instance(inst)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        handle = build_multi(inst)
    else:
        handle = build(inst)
    if args.lp_out:
        Path(args.lp_out).write_text(export_lp(handle.model), encoding="utf-8")
    incumbent = None
    if args.warm_start and inst.scenarios.n_scenarios == 2 and args.solver in ("builtin", "bnb", "highs"):
        from .rerouting import dynamic_reroute

        try:
            dr = dynamic_reroute(inst, time_limit=args.time_limit, method="auto" if args.solver == "builtin" else args.solver)
            incumbent = assignment_from_plan(handle, dr.plan)
        except RuntimeError as exc:
            log.warning("no warm start: %s", exc)
    try:
        sol = _solve_model(handle.model, args, incumbent)
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if sol.values is None:
        print(f"solver failure: status {sol.status.value}", file=sys.stderr)
        return EXIT_SOLVER
    plan = extract_plan(handle, sol)
    if args.plan_out:
        Path(args.plan_out).write_text(_json(plan_to_dict(plan)), encoding="utf-8")
    bad = check(inst, plan)
    ev = evaluate(inst, plan)
    report = {
        "model": args.model,
        "solver": sol.solver,
        "status": sol.status.value,
        "objective": sol.objective,
        "bound": sol.bound,
        "nodes": sol.nodes,
        "runtime_s": round(sol.runtime, 3),
        "evaluation": evaluation_to_dict(ev),
        "violations": [str(v) for v in bad],
    }
    _write(_json(report), args.out)
    if bad:
        return EXIT_INVALID
    return EXIT_OK


def cmd_reroute(args) -> int:
    from .rerouting import dynamic_reroute
    from .validator import check

    inst = _load(args.instance)
    if inst.scenarios.n_scenarios != 2:
        raise InputError("rerouting needs exactly two scenarios")
    method = "auto" if args.solver == "builtin" else args.solver
    if method == "external":
        raise InputError("rerouting runs on the in-process solvers only")
    try:
        res = dynamic_reroute(inst, time_limit=args.time_limit, method=method, accounting=args.accounting)
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.plan_out:
        Path(args.plan_out).write_text(_json(plan_to_dict(res.plan)), encoding="utf-8")
    bad = check(inst, res.plan)
    report = {
        "expected_value": res.expected_value,
        "accounting": args.accounting,
        "literal_value": res.literal_value,
        "planned_scenario": res.planned_scenario,
        "tie_break": "P(1)=P(2): planned for scenario 1" if res.tie_break else None,
        "N_a": list(res.N_a),
        "N_b": list(res.N_b),
        "visited": sorted(res.visited),
        "staging": {f"{q}.{k}": [node, rel] for (q, k), (node, rel) in sorted(res.staging.items())},
        "statuses": list(res.statuses),
        "runtime_s": round(res.runtime, 3),
        "evaluation": evaluation_to_dict(res.evaluation),
        "violations": [str(v) for v in bad],
    }
    _write(_json(report), args.report_out or args.out)
    return EXIT_INVALID if bad else EXIT_OK


def cmd_validate(args) -> int:
    from .core import evaluate
    from .validator import check

    inst = _load(args.instance)
    try:
        plan = load_plan(args.plan)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {args.plan}") from exc
    try:
        bad = check(inst, plan)
        ev = evaluate(inst, plan)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    lines = [f"{len(bad)} violation(s)"] + [f"  {v}" for v in bad]
    lines.append(f"expected value {ev.expected_total:.6f}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_INVALID if bad else EXIT_OK


def cmd_compare(args) -> int:
    from .generator import generate
    from .report import SolverConfig, compare, summarize, to_csv

    instances = []
    if args.instances:
        instances = [_load(p) for p in args.instances]
    else:
        seed0 = args.seed if args.seed is not None else 1
        try:
            for fleet in args.fleet:
                for n in args.assets:
                    for k in range(args.count):
                        instances.append(generate(n_assets=n, seed=seed0 + k, fleet=fleet))
        except (TypeError, ValueError, KeyError) as exc:
            raise InputError(str(exc)) from exc
    method = "auto" if args.solver == "builtin" else args.solver
    rows = compare(instances, SolverConfig(args.time_limit, method), workers=args.workers)
    if args.summary:
        rows = summarize(rows)
    _write(to_csv(rows), args.out)
    return EXIT_OK if all(r.status.startswith("ok") for r in rows) else EXIT_SOLVER


def cmd_firemap(args) -> int:
    from .firespread import derive_windows
    from .generator import GeneratorParams, generate

    kw = {"seed": args.seed if args.seed is not None else 1, "n_assets": args.assets or 50, "fleet": args.fleet, **_parse_params(args.param)}
    _check_keys(GeneratorParams, kw)
    try:
        p = GeneratorParams(**kw)
        inst = generate(p)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    d = derive_windows(inst.assets, p.fire_model(), inst.scenarios, tw1=p.tw1, tw2=p.tw2, fire_horizon=p.fire_horizon)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asset", "x", "y", "scenario", "impact_time", "category"])
    for a in inst.assets:
        for xi, t in enumerate(d.impact_times[a.id], start=1):
            w.writerow([a.id, f"{a.location[0]:.3f}", f"{a.location[1]:.3f}", xi, "NA" if t is None else f"{t:.6f}", d.categories[a.id].label])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--time-limit", type=float, default=300.0, help="solver budget in seconds (default 300)")
    common.add_argument("--workers", type=int, default=1, help="parallel instances for batch commands")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument(
        "--solver",
        choices=("builtin", "bnb", "highs", "external"),
        default="builtin",
        help="builtin picks bnb for small models and highs otherwise",
    )
    solver.add_argument("--solver-path", default=None, help="external solver binary (default $ASSETPROT_LP_SOLVER or cbc)")
    solver.add_argument("--solver-cmd", default=None, help="command template with {solver} {lp} {sol} {time}")

    p = argparse.ArgumentParser(prog="assetprot", description="Two-stage asset protection under uncertain wind-change timing.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a seeded instance")
    g.add_argument("--kind", choices=("benchmark", "micro", "case-study", "tiny"), default="benchmark")
    g.add_argument("--assets", type=int, default=None)
    g.add_argument("--fleet", default="set1", help="set1 or set2")
    g.add_argument("--param", action="append", default=[], metavar="K=V")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", parents=[common, solver], help="solve the two-stage model")
    s.add_argument("--instance", required=True)
    s.add_argument("--model", choices=("two-stage", "multi"), default="two-stage")
    s.add_argument("--lp-out", default=None)
    s.add_argument("--plan-out", default=None)
    s.add_argument("--no-warm-start", dest="warm_start", action="store_false")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("reroute", parents=[common, solver], help="run the dynamic-rerouting baseline")
    r.add_argument("--instance", required=True)
    r.add_argument("--plan-out", default=None)
    r.add_argument("--report-out", default=None)
    r.add_argument("--accounting", choices=("realized", "literal"), default="realized")
    r.set_defaults(func=cmd_reroute)

    v = sub.add_parser("validate", parents=[common], help="check a plan against an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--plan", required=True)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("compare", parents=[common, solver], help="two-stage versus rerouting CSV")
    c.add_argument("--instances", nargs="*", default=None)
    c.add_argument("--assets", type=int, nargs="+", default=[15])
    c.add_argument("--fleet", nargs="+", default=["set1"])
    c.add_argument("--count", type=int, default=1, help="seeds per (fleet, size)")
    c.add_argument("--summary", action="store_true", help="one mean row per (fleet, size)")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("firemap", parents=[common], help="CSV of impact times and risk categories")
    f.add_argument("--assets", type=int, default=None)
    f.add_argument("--fleet", default="set1")
    f.add_argument("--param", action="append", default=[], metavar="K=V")
    f.set_defaults(func=cmd_firemap)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, InstanceFormatError, InstanceError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
