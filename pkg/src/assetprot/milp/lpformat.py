"""CPLEX-LP export and an external-solver bridge.

Names are the models' semantic labels with brackets turned into
parentheses, since ``[`` and ``]`` are not legal in LP identifiers.
"""

from __future__ import annotations

import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .model import MilpModel, Sense, Solution, Status, VarKind

log = logging.getLogger(__name__)

_ALLOWED = re.compile(r"[^A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]")
_LINE = 200
DEFAULT_TEMPLATE = "{solver} {lp} -sec {time} -solve -solu {sol}"
SOLVER_ENV = "ASSETPROT_LP_SOLVER"


class SolutionFormatError(ValueError):
    pass


def sanitize(label: str) -> str:
    s = label.replace("[", "(").replace("]", ")")
    s = _ALLOWED.sub("_", s)
    if not s or s[0].isdigit() or s[0] == ".":
        s = "_" + s
    return s[:255]


def _unique(labels) -> list[str]:
    seen: set[str] = set()
    out = []
    for lab in labels:
        base = sanitize(lab)
        name, k = base, 1
        while name in seen:
            name = f"{base}_{k}"
            k += 1
        seen.add(name)
        out.append(name)
    return out


def lp_names(model: MilpModel) -> list[str]:
    """LP identifier of every variable, in index order."""
    return _unique(v.label for v in model.variables)


def _num(a: float) -> str:
    if a == int(a) and abs(a) < 1e15:
        return str(int(a))
    return repr(float(a))


def _terms(coeffs, names) -> str:
    parts = []
    for j, a in coeffs:
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        term = names[j] if mag == 1 else f"{_num(mag)} {names[j]}"
        parts.append((sign, term))
    if not parts:
        return "0 " + names[0] if names else "0"
    first_sign, first = parts[0]
    out = [("- " if first_sign == "-" else "") + first]
    out += [f"{s} {t}" for s, t in parts[1:]]
    return " ".join(out)


def _wrap(line: str) -> list[str]:
    if len(line) <= _LINE:
        return [line]
    out, cur = [], ""
    for tok in line.split(" "):
        if cur and len(cur) + 1 + len(tok) > _LINE:
            out.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}" if cur else tok
    out.append(cur)
    return out


def export_lp(model: MilpModel) -> str:
    """The model as CPLEX-LP text; identical models give identical text."""
    names = lp_names(model)
    cnames = _unique(c.name for c in model.constraints)
    lines = ["Maximize"]
    obj = sorted(model.objective.items())
    lines += _wrap(" obj: " + (_terms(obj, names) if obj else f"0 {names[0]}" if names else "0"))
    lines.append("Subject To")
    for cn, con in zip(cnames, model.constraints):
        lines += _wrap(f" {cn}: {_terms(con.coeffs, names)} {con.sense.value} {_num(con.rhs)}")
    bounds = []
    for v, name in zip(model.variables, names):
        lo, hi = v.lower, v.upper
        if v.kind is VarKind.BINARY and lo == 0 and hi == 1:
            continue
        if lo == 0 and math.isinf(hi):
            continue
        if lo == hi:
            bounds.append(f" {name} = {_num(lo)}")
            continue
        left = "-inf" if math.isinf(lo) else _num(lo)
        right = f" <= {_num(hi)}" if math.isfinite(hi) else ""
        bounds.append(f" {left} <= {name}{right}")
    if bounds:
        lines += ["Bounds", *bounds]
    gen = [names[v.index] for v in model.variables if v.kind is VarKind.INTEGER]
    binary = [names[v.index] for v in model.variables if v.kind is VarKind.BINARY]
    if gen:
        lines += ["Generals", *(" " + g for g in gen)]
    if binary:
        lines += ["Binaries", *(" " + b for b in binary)]
    lines.append("End")
    return "\n".join(lines) + "\n"


_STATUS = (
    ("optimal", Status.OPTIMAL),
    ("infeasible", Status.INFEASIBLE),
    ("integer infeasible", Status.INFEASIBLE),
    ("stopped", Status.FEASIBLE),
)


def parse_external_solution(text: str, model: MilpModel, warn_missing: bool = True) -> Solution:
    """Read a CBC-style solution file into a :class:`Solution`.

    The first line carries the status; each further line is
    ``index name value [reduced cost]``.  Variables absent from the file
    are zero, as LP solution writers omit them.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SolutionFormatError("empty solution file")
    head = lines[0].strip().lower()
    status = None
    for key, st in _STATUS:
        if head.startswith(key):
            status = st
            break
    if status is None:
        raise SolutionFormatError(f"unrecognised status line {lines[0]!r}")
    if status is Status.INFEASIBLE:
        return Solution(Status.INFEASIBLE, None, None, solver="external")
    if status is Status.FEASIBLE and ("no integer" in head or "objective value" not in head):
        # a time-out without an integer incumbent reports relaxation values
        return Solution(Status.TIME_LIMIT, None, None, solver="external")
    index = {name: j for j, name in enumerate(lp_names(model))}
    x = np.zeros(model.n_vars)
    seen = set()
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) < 3 or not parts[0].lstrip("*").isdigit():
            raise SolutionFormatError(f"malformed line {ln!r}")
        name = parts[1]
        if name not in index:
            raise SolutionFormatError(f"unknown variable {name!r}")
        try:
            x[index[name]] = float(parts[2])
        except ValueError as exc:
            raise SolutionFormatError(f"bad value in {ln!r}") from exc
        seen.add(name)
    if not seen:
        raise SolutionFormatError("solution file carries no variable values")
    missing = len(index) - len(seen)
    if missing:
        (log.warning if warn_missing else log.debug)("%d variables absent from the solution file; taken as 0", missing)
    ints = model.integer_indices
    x[ints] = np.round(x[ints])
    return Solution(status, x, model.objective_value(x), solver="external")


def find_external_solver() -> Optional[str]:
    """Configured solver binary: ``$ASSETPROT_LP_SOLVER``, else ``cbc`` on PATH."""
    env = os.environ.get(SOLVER_ENV)
    if env:
        return env
    return shutil.which("cbc")


def solve_external(
    model: MilpModel,
    solver: Optional[str] = None,
    template: str = DEFAULT_TEMPLATE,
    time_limit: Optional[float] = 300.0,
    workdir: Optional[str] = None,
    keep_files: bool = False,
) -> Solution:
    """Export, run the external solver as a subprocess, read its answer."""
    solver = solver or find_external_solver()
    if not solver:
        raise RuntimeError(f"no external solver configured; set {SOLVER_ENV} or put cbc on PATH")
    start = time.perf_counter()
    tmp = tempfile.mkdtemp(prefix="assetprot_lp_", dir=workdir)
    lp = Path(tmp) / "model.lp"
    sol = Path(tmp) / "model.sol"
    lp.write_text(export_lp(model))
    limit = 1e9 if time_limit is None else time_limit
    cmd = template.format(solver=shlex.quote(solver), lp=shlex.quote(str(lp)), sol=shlex.quote(str(sol)), time=_num(limit))
    try:
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=None if time_limit is None else limit + 60)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RuntimeError(f"external solver could not run: {exc}") from exc
        if not sol.exists():
            raise RuntimeError(f"external solver wrote no solution (exit {proc.returncode}): {proc.stdout[-500:]}{proc.stderr[-500:]}")
        out = parse_external_solution(sol.read_text(), model, warn_missing=False)
    finally:
        if not keep_files:
            shutil.rmtree(tmp, ignore_errors=True)
    out.runtime = time.perf_counter() - start
    return out
