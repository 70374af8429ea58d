"""Two-stage stochastic asset protection under uncertain wind-change timing."""

from importlib import resources

from .core import (
    Asset,
    Evaluation,
    Fleet,
    Instance,
    InstanceError,
    InstanceFormatError,
    Plan,
    ScenarioSet,
    TimeWindows,
    TravelMatrix,
    evaluate,
    load_instance,
    load_plan,
    save_instance,
    save_plan,
)
from .firespread import EllipticalFireSpread, FireModel, derive_windows, impact_time
from .generator import GeneratorParams, case_study, generate, generate_micro
from .milp import solve_exact
from .multiscenario import build_multi, order_scenarios
from .planners import ReroutingPlanner, TwoStagePlanner
from .rerouting import build_deterministic, dynamic_reroute, staging_positions
from .stochastic import build, extract_plan
from .validator import brute_force_optimum, check

__version__ = "0.1.0"


def bundled_instance(name: str) -> Instance:
    """Load ``tiny_2asset`` or ``blacksaturday`` from the package data."""
    ref = resources.files(__package__) / "data" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled instance {name!r}")
    with resources.as_file(ref) as path:
        return load_instance(path)


__all__ = [
    "Asset",
    "EllipticalFireSpread",
    "Evaluation",
    "FireModel",
    "Fleet",
    "GeneratorParams",
    "Instance",
    "InstanceError",
    "InstanceFormatError",
    "Plan",
    "ReroutingPlanner",
    "ScenarioSet",
    "TimeWindows",
    "TravelMatrix",
    "TwoStagePlanner",
    "brute_force_optimum",
    "build",
    "build_deterministic",
    "build_multi",
    "bundled_instance",
    "case_study",
    "check",
    "derive_windows",
    "dynamic_reroute",
    "evaluate",
    "extract_plan",
    "generate",
    "generate_micro",
    "impact_time",
    "load_instance",
    "load_plan",
    "order_scenarios",
    "save_instance",
    "save_plan",
    "solve_exact",
    "staging_positions",
]
