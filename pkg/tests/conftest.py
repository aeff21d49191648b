"""Shared fixtures: shipped data directories, Table 1 clay and small solver problems."""

import json
from pathlib import Path

import pytest

from richards_lrbf import create_coordinator
from richards_lrbf.domain_discretization import build_grid
from richards_lrbf.kirchhoff_transform import TransformContext
from richards_lrbf.lrbf_operators import KernelConfig
from richards_lrbf.nonlinear_stepper import (
    BoundarySpec,
    InfiltrationProblem,
    InitialCondition,
    StepperConfig,
)
from richards_lrbf.scenario_loader import ScenarioLoader
from richards_lrbf.soil_constitutive import HomogeneousField, SoilParams

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / "soil_data"
SCENARIO_DIR = ROOT / "scenarios"

SHIPPED_SCENARIOS = sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


@pytest.fixture
def clay():
    return SoilParams(theta_r=0.09, theta_s=0.475, k_s=0.0144, h_d=-0.3731,
                      lam=0.131, beta=18.2672, name="clay")


@pytest.fixture
def table1_soils():
    return {
        "clay": SoilParams(0.09, 0.475, 0.0144, -0.3731, 0.131, 18.2672, "clay"),
        "clay_loam": SoilParams(0.075, 0.366, 0.040, -0.2590, 0.194, 13.3093, "clay_loam"),
        "sand": SoilParams(0.04, 0.354, 5.04, -0.01471, 1.051, 4.9029, "sand"),
        "silty_clay": SoilParams(0.056, 0.479, 0.0216, -0.3425, 0.127, 18.7480, "silty_clay"),
    }


@pytest.fixture
def loader():
    return ScenarioLoader(str(DATA_DIR), str(SCENARIO_DIR))


@pytest.fixture
def coordinator():
    return create_coordinator({
        'data_directory': str(DATA_DIR),
        'scenario_directory': str(SCENARIO_DIR),
        'event_logging': False,
    })


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario document to a temporary file and return its path."""
    def _write(document, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def clay_document():
    """A small inline clay column in the shipped file format."""
    return {
        "name": "small_clay",
        "units": {"length": "m", "time": "day"},
        "dimensions": 1,
        "extents": [0.0, 0.0, 1.0],
        "counts": [1, 1, 21],
        "soil": {"kind": "homogeneous", "table": "table1", "material": "clay"},
        "initial": {"kind": "water_content", "value": 0.226},
        "boundary": {"top_head": 0.0, "bottom_head": None},
        "kernel": {"shape": 0.6, "n_s": 3, "scaling": "absolute"},
        "stepper": {"dt": 0.001, "tol": 1e-06, "max_picard": 50, "linear_solver": "auto"},
        "final_time": 0.005,
        "output_times": [0.0, 0.002, 0.005],
    }


def make_clay_problem(soil, nodes=21, dt=1e-3, final_time=0.0, output_times=(0.0,),
                      initial=None, boundary=None, tol=1e-6, max_picard=50,
                      storage="conservative", field=None):
    extents = (0.0, 0.0, 1.0)
    cloud = build_grid(extents, (1, 1, nodes), dims=1)
    field = field or HomogeneousField(extents=extents, soil=soil)
    context = TransformContext.build(field, cloud.nodes)
    return InfiltrationProblem(
        name="clay_column",
        cloud=cloud,
        context=context,
        kernel=KernelConfig(shape=0.6, n_s=3),
        stepper=StepperConfig(dt=dt, tol=tol, max_picard=max_picard, storage=storage),
        initial=initial or InitialCondition(kind='head', value=-1.0),
        boundary=boundary or BoundarySpec(),
        final_time=final_time,
        output_times=tuple(output_times),
    )


@pytest.fixture
def clay_problem(clay):
    """Factory for small homogeneous clay columns."""
    def _build(**options):
        return make_clay_problem(clay, **options)
    return _build


@pytest.fixture
def small_clay_path(write_scenario, clay_document):
    return write_scenario(clay_document, "small_clay.json")


@pytest.fixture
def small_report(coordinator, small_clay_path):
    """Report of a five-step run of the small clay column."""
    return coordinator.run_scenario(coordinator.load_scenario(small_clay_path))
