"""Tests for the simulation coordinator and the package factory."""

import numpy as np
import pandas as pd
import pytest

from richards_lrbf import DEFAULT_CONFIG, create_coordinator, get_version_info
from richards_lrbf.event_dispatcher import EventType
from richards_lrbf.exceptions import IllConditionedError, ScenarioParseError

from .conftest import DATA_DIR, SCENARIO_DIR


def test_factory_merges_defaults():
    coordinator = create_coordinator({'oracle_refinement': 2, 'event_logging': False})
    assert coordinator.oracle_refinement == 2
    assert coordinator.condition_limit == DEFAULT_CONFIG['condition_limit']
    assert get_version_info()['version'] == "1.0.0"


def test_run_updates_metrics_and_events(coordinator, small_report):
    metrics = coordinator.get_performance_metrics()
    assert metrics['runs_completed'] == 1
    assert metrics['steps_taken'] == 5
    assert metrics['picard_iterations'] == small_report.total_iterations
    types = [e['type'] for e in coordinator.event_manager.get_recent_events(limit=1000)]
    assert types[0] == 'run_started'
    assert types[-1] == 'run_completed'


def test_verify_one_dimensional_column(coordinator, small_clay_path):
    outcome = coordinator.verify(coordinator.load_scenario(small_clay_path))
    report, oracle = outcome['report'], outcome['oracle']
    assert report.reference == 'oracle'
    assert oracle.refinement == 4
    assert [m['time'] for m in report.metrics] == pytest.approx([0.0, 0.002, 0.005])
    assert report.metrics[0]['rmse'] <= 1e-12
    assert 0.0 < report.worst_metric('rmse') < 0.05
    assert oracle.mass_balance_error <= 1e-5


def test_compare_with_reference_file(coordinator, small_report, tmp_path):
    rows = [
        pd.DataFrame({'time': snapshot.time, 'theta': snapshot.theta + 0.01})
        for snapshot in small_report.profiles
    ]
    path = tmp_path / "reference.csv"
    pd.concat(rows).to_csv(path, index=False, float_format='%.17g')
    coordinator.compare_with_file(small_report, str(path))
    assert small_report.reference == str(path)
    assert len(small_report.metrics) == 3
    np.testing.assert_allclose([m['rmse'] for m in small_report.metrics], 0.01, rtol=1e-9)

    broken = tmp_path / "broken.csv"
    broken.write_text("time,water\n0,0.2\n", encoding="utf-8")
    with pytest.raises(ScenarioParseError):
        coordinator.compare_with_file(small_report, str(broken))


def test_two_dimensional_mass_comparison(coordinator):
    scenario = coordinator.load_scenario("curvilinear_2d").with_overrides(
        grid_scale=0.01, dt=0.01, final_time=0.05
    )
    assert scenario.output_times == (0.0, 0.05)
    outcome = coordinator.verify(scenario)
    report = outcome['report']
    assert report.counts == (11, 1, 11)
    assert [set(m) for m in report.metrics] == [
        {'time', 'mass', 'reference_mass', 'mass_difference'}
    ] * 2
    for entry in report.metrics:
        assert np.isfinite(entry['mass_difference'])
        assert entry['mass_difference'] < 0.5
    assert np.all(report.profiles[-1].saturation <= 1.0)


def test_oracle_column_goes_through_the_centre(coordinator):
    scenario = coordinator.load_scenario("silty_clay_3d")
    column = coordinator.oracle_column(scenario)
    assert column.position == (0.15, 0.15)
    assert column.nodes == 300


def test_failed_run_is_recorded():
    coordinator = create_coordinator({
        'data_directory': str(DATA_DIR),
        'scenario_directory': str(SCENARIO_DIR),
        'event_logging': False,
        'condition_limit': 1.5,
    })
    scenario = coordinator.load_scenario("curvilinear_2d").with_overrides(grid_scale=0.01)
    with pytest.raises(IllConditionedError):
        coordinator.run_scenario(scenario)
    assert coordinator.get_performance_metrics()['runs_failed'] == 1
    failures = coordinator.event_manager.get_recent_events(EventType.RUN_FAILED)
    assert failures[0]['data']['error'] == 'IllConditionedError'


def test_curvilinear_column_takes_its_first_step(coordinator):
    scenario = coordinator.load_scenario("curvilinear_2d")
    dt = scenario.stepper.dt
    report = coordinator.run_scenario(scenario.with_overrides(grid_scale=0.02, final_time=dt))
    assert report.counts == (21, 1, 21)
    assert len(report.iterations) == 1
    assert report.iterations[0] <= scenario.stepper.max_picard
    saturation = report.profiles[-1].saturation
    assert np.all((saturation > 0.0) & (saturation <= 1.0))
