"""Tests for profile tables, VTK files, x-slices and the run summary."""

import json

import numpy as np
import pandas as pd
import pytest

from richards_lrbf.domain_discretization import build_grid
from richards_lrbf.exceptions import ConfigurationError, OutputError
from richards_lrbf.output_writer import parse_formats, slice_indices, write_outputs
from richards_lrbf.run_report import ProfileSnapshot, RunReport


@pytest.fixture
def cube_report():
    """A synthetic 3D report whose nodal values equal the node index."""
    cloud = build_grid((1.0, 0.5, 1.0), (5, 3, 4), dims=3)
    report = RunReport("cube", 3, cloud.nodes, cloud.counts, cloud.extents,
                       {"length": "m", "time": "day"})
    values = np.arange(cloud.size, dtype=float)
    report.profiles.append(ProfileSnapshot(time=0.0, theta=values, head=-values,
                                           saturation=values / 100.0, kirchhoff=values + 1.0,
                                           mass=1.0))
    report.initial_mass = report.final_mass = 1.0
    return report


def test_parse_formats():
    assert parse_formats("csv, VTK") == ["csv", "vtk"]
    with pytest.raises(ConfigurationError):
        parse_formats("csv,png")


def test_one_dimensional_outputs(small_report, tmp_path):
    written = write_outputs(small_report, str(tmp_path), ["csv", "vtk"])
    names = [p.split("/")[-1] for p in written]
    assert names == ["small_clay_t000.csv", "small_clay_t001.csv", "small_clay_t002.csv",
                     "small_clay_summary.json"]

    frame = pd.read_csv(tmp_path / "small_clay_t002.csv")
    assert list(frame.columns) == ["z", "theta", "h", "S", "u"]
    assert len(frame) == 21
    np.testing.assert_allclose(frame["theta"].to_numpy(), small_report.profiles[-1].theta, rtol=1e-15)

    summary = json.loads((tmp_path / "small_clay_summary.json").read_text(encoding="utf-8"))
    assert summary["output_times"] == small_report.output_times
    assert summary["steps"] == 5


def test_three_dimensional_outputs(cube_report, tmp_path):
    written = write_outputs(cube_report, str(tmp_path), ["csv", "vtk"])
    assert len(written) == 1 + 1 + 5 + 1
    assert slice_indices(cube_report) == [0, 1, 2, 3, 4]

    lines = (tmp_path / "cube_t000.vtk").read_text(encoding="utf-8").splitlines()
    assert lines[4] == "DIMENSIONS 5 3 4"
    assert lines[7] == "POINT_DATA 60"
    assert lines[8] == "SCALARS saturation double 1"
    # x varies fastest in the VTK file, z fastest in memory
    assert [float(v) for v in lines[10:12]] == [0.0, 0.04]

    frame = pd.read_csv(tmp_path / "cube_t000_xslice2.csv")
    assert list(frame.columns) == ["y", "z", "S", "theta"]
    assert len(frame) == 12
    np.testing.assert_allclose(frame["theta"][:4], [8.0, 9.0, 10.0, 11.0])


def test_identical_runs_write_identical_files(coordinator, small_clay_path, tmp_path):
    scenario = coordinator.load_scenario(small_clay_path)
    first = write_outputs(coordinator.run_scenario(scenario), str(tmp_path / "a"))
    second = write_outputs(coordinator.run_scenario(scenario), str(tmp_path / "b"))
    assert len(first) == len(second)
    for a, b in zip(first, second):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()


def test_unwritable_directory(small_report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(OutputError):
        write_outputs(small_report, str(blocker / "out"))
