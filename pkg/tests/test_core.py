import json
import math
from importlib import resources

import numpy as np
import pytest
from conftest import make_instance

from assetprot import bundled_instance
from assetprot.core import (
    Asset,
    InstanceError,
    InstanceFormatError,
    Plan,
    dumps_canonical,
    evaluate,
    instance_to_dict,
    load_instance,
    load_plan,
    save_instance,
    save_plan,
)
from assetprot.generator import generate


def _data(name):
    return resources.files("assetprot") / "data" / name


def test_tiny_bundled_shape(tiny):
    assert tiny.n == 2
    assert tiny.n_types == 1
    assert tiny.scenarios.n_scenarios == 2


def test_case_study_bundled_shape():
    inst = bundled_instance("blacksaturday")
    assert inst.n == 25
    assert inst.fleet.counts == (5, 3, 2)


def test_probability_sum_rejected(tmp_path, tiny):
    d = instance_to_dict(tiny)
    d["scenarios"]["items"][0]["probability"] = 0.7
    d["scenarios"]["items"][1]["probability"] = 0.4
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(InstanceError) as err:
        load_instance(p)
    assert err.value.check == "probability_sum"


def test_parse_error_names_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "assets": [\n    1,,\n  ]\n}\n')
    with pytest.raises(InstanceFormatError, match="line 3"):
        load_instance(p)


def test_missing_field_named(tmp_path, tiny):
    d = instance_to_dict(tiny)
    del d["assets"][0]["value"]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(InstanceFormatError, match="value"):
        load_instance(p)


def test_tiny_round_trip_bytes(tmp_path, tiny):
    out = tmp_path / "tiny.json"
    save_instance(tiny, out)
    assert out.read_bytes() == _data("tiny_2asset.json").read_bytes()


def test_generated_round_trip_equal(tmp_path):
    inst = generate(n_assets=50, seed=3)
    p = tmp_path / "g.json"
    save_instance(inst, p)
    back = load_instance(p)
    assert back == inst
    save_instance(back, tmp_path / "g2.json")
    assert (tmp_path / "g2.json").read_bytes() == p.read_bytes()


def test_nan_refused():
    with pytest.raises(InstanceError):
        make_instance([((math.nan, 1.0), 10, (1,))])
    with pytest.raises(ValueError):
        dumps_canonical({"x": float("nan")})


def test_canonical_numbers_have_no_exponent():
    assert dumps_canonical([1e-7, 2.5, 3]) == "[0.0000001, 2.5, 3]"


@pytest.mark.parametrize(
    "mutate, check",
    [
        (dict(stage2=({1: (3.0, 2.0)}, {})), "window_bounds"),
        (dict(stage1={1: (0.5, 1.8)}), "stage1_close"),
        (dict(occurrence=(2.0, 2.0)), "occurrence_order"),
        (dict(occurrence=(1.5, 3.0)), "staging_time"),
    ],
)
def test_invariants_named(mutate, check):
    with pytest.raises(InstanceError) as err:
        make_instance([((3.0, 4.0), 10, (1,))], **mutate)
    assert err.value.check == check


def test_requirements_length_checked():
    with pytest.raises(InstanceError, match="requirements_length"):
        make_instance([((3.0, 4.0), 10, (1, 0))], fleet=(1,))


def test_evaluate_empty_plan(tiny):
    assert evaluate(tiny, Plan.empty(tiny)).expected_total == 0


def _serviced(inst, s1=(), s2=None):
    base = Plan.empty(inst)
    s2 = s2 or [() for _ in inst.scenarios.ids]
    return Plan(base.vehicles, base.stage1_routes, base.staging_nodes, base.stage2_routes, frozenset(s1), tuple(frozenset(s) for s in s2))


def test_evaluate_stage1_value():
    inst = make_instance([((3.0, 4.0), 10, (1,))], stage1={1: (0.5, 1.5)})
    assert evaluate(inst, _serviced(inst, s1=[1])).expected_total == 10


def test_evaluate_scenario_weighting():
    inst = make_instance([((3.0, 4.0), 10, (1,))], stage2=({1: (1.5, 3.0)}, {}))
    assert evaluate(inst, _serviced(inst, s2=[[1], []])).expected_total == pytest.approx(6.0, abs=1e-12)


def test_evaluate_linear_and_scalable():
    assets = [((3.0, 4.0), 10, (1,)), ((6.0, 8.0), 25, (1,))]
    w2 = ({1: (1.5, 3.0), 2: (1.5, 3.0)}, {2: (1.5, 3.0)})
    inst = make_instance(assets, stage2=w2)
    a = evaluate(inst, _serviced(inst, s2=[[1], []])).expected_total
    b = evaluate(inst, _serviced(inst, s2=[[2], [2]])).expected_total
    both = evaluate(inst, _serviced(inst, s2=[[1, 2], [2]])).expected_total
    assert both == pytest.approx(a + b, abs=1e-9)
    scaled = make_instance([(loc, 3 * v, r) for loc, v, r in assets], stage2=w2)
    assert evaluate(scaled, _serviced(scaled, s2=[[1, 2], [2]])).expected_total == pytest.approx(3 * both, abs=1e-9)


def test_evaluate_dimension_mismatch(tiny):
    bad = _serviced(tiny)
    bad = Plan(bad.vehicles, bad.stage1_routes, bad.staging_nodes, bad.stage2_routes[:1], frozenset(), bad.serviced_stage2[:1])
    with pytest.raises(ValueError):
        evaluate(tiny, bad)


def test_plan_round_trip(tmp_path, tiny):
    from assetprot.stochastic import build, extract_plan
    from assetprot.milp import solve_exact

    h = build(tiny)
    plan = extract_plan(h, solve_exact(h.model))
    save_plan(plan, tmp_path / "p.json")
    assert load_plan(tmp_path / "p.json") == plan


def test_travel_matrix_read_only(tiny):
    with pytest.raises(ValueError):
        tiny.travel.times[0, 0, 1] = 5.0
    assert np.all(np.diagonal(tiny.travel.times, axis1=1, axis2=2) == 0)


def test_asset_coerces_types():
    a = Asset(1, (1, 2), 5, 0.5, [1, 0])
    assert a.location == (1.0, 2.0) and a.requirements == (1, 0)
