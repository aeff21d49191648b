"""Tests for the run report built from a finished simulation."""

import numpy as np
import pytest

from richards_lrbf.run_report import ProfileSnapshot, RunReport


def test_report_from_run(small_report):
    report = small_report
    assert report.scenario == "small_clay"
    assert report.output_times == pytest.approx([0.0, 0.002, 0.005])
    assert len(report.iterations) == 5
    assert report.total_iterations == sum(report.iterations)
    assert report.median_iterations == float(np.median(report.iterations))
    assert report.units == {"length": "m", "time": "day"}

    first = report.profiles[0]
    assert first.theta.shape == (21,)
    np.testing.assert_allclose(first.theta[:-1], 0.226, rtol=1e-12)
    assert report.mass_series[0] == pytest.approx(report.initial_mass)
    assert report.mass_series[-1] == pytest.approx(report.final_mass)
    assert report.final_mass > report.initial_mass
    assert report.mass_balance_error <= 1e-3
    assert report.assembly['interior_signatures'] == 1
    assert report.assembly['extended_domains'] == 0


def test_metrics_bookkeeping(small_report):
    assert small_report.worst_metric('rmse') is None
    small_report.add_metric(0.002, rmse=0.01, l1=1e-3)
    small_report.add_metric(0.005, rmse=0.03, l1=2e-3)
    assert small_report.worst_metric('rmse') == 0.03
    assert small_report.metrics[0] == {'time': 0.002, 'rmse': 0.01, 'l1': 1e-3}


def test_summary_is_free_of_timing(small_report):
    summary = small_report.summary()
    assert 'wall_clock' not in summary
    assert summary['steps'] == 5
    assert summary['max_iterations'] == max(small_report.iterations)
    assert 'profiles' not in summary


def test_dictionary_round_trip(small_report):
    data = small_report.to_dict()
    restored = RunReport.from_dict(data)
    assert restored.summary() == small_report.summary()
    for a, b in zip(restored.profiles, small_report.profiles):
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.kirchhoff, b.kirchhoff)
    assert 'profiles' not in small_report.to_dict(include_profiles=False)


def test_snapshot_dictionary_form():
    snapshot = ProfileSnapshot(time=0.5, theta=np.array([0.2, 0.3]), head=np.array([-2.0, -1.0]),
                               saturation=np.array([0.4, 0.6]), kirchhoff=np.array([0.1, 0.2]),
                               mass=0.25)
    data = snapshot.to_dict()
    assert data['theta'] == [0.2, 0.3]
    assert ProfileSnapshot.from_dict(data).mass == 0.25
