import os
import sys
import shutil
from pathlib import Path

import pytest

from assetprot.core import Asset, Fleet, Instance, ScenarioSet, TimeWindows, TravelMatrix

PULP_CBC = "/usr/local/lib/python3.10/dist-packages/pulp/solverdir/cbc/linux/i64/cbc"


def make_instance(
    assets,
    stage1=None,
    stage2=({}, {}),
    probs=(0.6, 0.4),
    fleet=(1,),
    speed=10.0,
    staging_time=2.0,
    occurrence=None,
    depot=(0.0, 0.0),
    service=0.5,
    horizon=None,
):
    """Hand-built instance; ``assets`` is a list of ``(location, value, requirements)``."""
    objs = tuple(Asset(k, loc, val, service, req) for k, (loc, val, req) in enumerate(assets, start=1))
    points = [depot] + [a.location for a in objs] + [depot]
    travel = TravelMatrix.euclidean(points, [speed] * len(fleet))
    F = len(probs)
    occ = occurrence or tuple(staging_time + 0.5 * k for k in range(F))
    closes = [c for _, c in (stage1 or {}).values()] + [c for w in stage2 for _, c in w.values()]
    hz = horizon if horizon is not None else max(closes, default=0.0) + float(travel.times.max()) + 1.0
    return Instance(
        objs,
        (depot, depot),
        Fleet(tuple(fleet)),
        ScenarioSet(tuple(probs), occ, staging_time),
        travel,
        TimeWindows(stage1 or {}, tuple(stage2), hz),
    )


def cbc_path():
    env = os.environ.get("ASSETPROT_LP_SOLVER")
    if env:
        return env
    found = shutil.which("cbc")
    if found:
        return found
    return PULP_CBC if Path(PULP_CBC).exists() else None


@pytest.fixture
def tiny():
    from assetprot import bundled_instance

    return bundled_instance("tiny_2asset")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
