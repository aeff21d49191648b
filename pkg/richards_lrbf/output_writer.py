"""
Output Writer Module
Profile tables, legacy VTK structured-points files, x-slices and the run summary

File names depend only on the scenario name and the output index, and numbers are
written with full precision, so identical runs produce identical files.
"""

import json
import logging
import os
from typing import List, Sequence

import numpy as np
import pandas as pd

from .domain_discretization import AXIS_NAMES, active_axes_for
from .exceptions import ConfigurationError, OutputError
from .run_report import ProfileSnapshot, RunReport

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'vtk')
FLOAT_FORMAT = '%.17g'
SLICE_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)


def parse_formats(value: str) -> List[str]:
    """Split a comma-separated format list and validate each entry."""
    formats = [f.strip().lower() for f in value.split(',') if f.strip()]
    for f in formats:
        if f not in FORMATS:
            raise ConfigurationError(f"unknown output format '{f}' (choose from {', '.join(FORMATS)})")
    return formats


def ensure_directory(path: str):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc))


def _coordinate_columns(report: RunReport) -> dict:
    return {
        AXIS_NAMES[axis]: report.nodes[:, axis]
        for axis in active_axes_for(report.dims)
    }


def profile_frame(report: RunReport, snapshot: ProfileSnapshot) -> pd.DataFrame:
    """Coordinates of the active axes followed by theta, h, S and u."""
    columns = _coordinate_columns(report)
    columns.update({
        'theta': snapshot.theta,
        'h': snapshot.head,
        'S': snapshot.saturation,
        'u': snapshot.kirchhoff,
    })
    return pd.DataFrame(columns)


def _write_csv(frame: pd.DataFrame, path: str):
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8',
                     lineterminator='\n')
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc))


def _grid_xyz(report: RunReport, values: np.ndarray) -> np.ndarray:
    """Nodal values reordered from z-fastest storage to x-fastest VTK order."""
    nx, ny, nz = report.counts
    return np.asarray(values).reshape(ny, nx, nz).transpose(2, 0, 1).ravel()


def write_vtk(report: RunReport, snapshot: ProfileSnapshot, path: str):
    """Legacy ASCII VTK file with one scalar field per quantity."""
    nx, ny, nz = report.counts
    spacing = [
        report.extents[axis] / (report.counts[axis] - 1) if report.counts[axis] > 1 else 1.0
        for axis in range(3)
    ]
    lines = [
        '# vtk DataFile Version 3.0',
        f'{report.scenario} t={snapshot.time!r}',
        'ASCII',
        'DATASET STRUCTURED_POINTS',
        f'DIMENSIONS {nx} {ny} {nz}',
        'ORIGIN 0 0 0',
        'SPACING {0!r} {1!r} {2!r}'.format(*spacing),
        f'POINT_DATA {nx * ny * nz}',
    ]
    fields = (
        ('saturation', snapshot.saturation),
        ('water_content', snapshot.theta),
        ('pressure_head', snapshot.head),
        ('kirchhoff', snapshot.kirchhoff),
    )
    for name, values in fields:
        lines.append(f'SCALARS {name} double 1')
        lines.append('LOOKUP_TABLE default')
        lines.extend(FLOAT_FORMAT % v for v in _grid_xyz(report, values))
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write('\n'.join(lines))
            f.write('\n')
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc))


def slice_indices(report: RunReport, fractions: Sequence[float] = SLICE_FRACTIONS) -> List[int]:
    """Grid column ix nearest to each fraction of l1."""
    nx = report.counts[0]
    return [int(round(f * (nx - 1))) for f in fractions]


def x_slice_frame(report: RunReport, snapshot: ProfileSnapshot, ix: int) -> pd.DataFrame:
    nx, ny, nz = report.counts
    columns = {}
    for name, values in (('y', report.nodes[:, 1]), ('z', report.nodes[:, 2]),
                         ('S', snapshot.saturation), ('theta', snapshot.theta)):
        columns[name] = np.asarray(values).reshape(ny, nx, nz)[:, ix, :].ravel()
    if report.dims == 2:
        del columns['y']
    return pd.DataFrame(columns)


def write_summary(report: RunReport, path: str):
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(report.summary(), f, indent=2, ensure_ascii=False)
            f.write('\n')
    except (OSError, TypeError) as exc:
        raise OutputError(path, getattr(exc, 'strerror', None) or str(exc))


def write_outputs(report: RunReport, out_dir: str, formats: Sequence[str] = ('csv',)) -> List[str]:
    """
    Write every artifact of a finished run.

    Args:
        report: Completed run.
        out_dir: Target directory, created when missing.
        formats: Any of 'csv' (one profile table per output time) and 'vtk' (one
            structured-points file per output time, 2D and 3D only).

    Returns:
        Paths written, profiles first, summary last.
    """
    for f in formats:
        if f not in FORMATS:
            raise ConfigurationError(f"unknown output format '{f}'")
    ensure_directory(out_dir)
    stem = os.path.join(out_dir, report.scenario)
    written = []
    for index, snapshot in enumerate(report.profiles):
        tag = f"{stem}_t{index:03d}"
        if 'csv' in formats:
            _write_csv(profile_frame(report, snapshot), f"{tag}.csv")
            written.append(f"{tag}.csv")
        if 'vtk' in formats and report.dims > 1:
            write_vtk(report, snapshot, f"{tag}.vtk")
            written.append(f"{tag}.vtk")
        if 'csv' in formats and report.dims == 3:
            for k, ix in enumerate(slice_indices(report)):
                path = f"{tag}_xslice{k}.csv"
                _write_csv(x_slice_frame(report, snapshot, ix), path)
                written.append(path)
    summary_path = f"{stem}_summary.json"
    write_summary(report, summary_path)
    written.append(summary_path)
    logger.info("wrote %d files to %s", len(written), out_dir)
    return written
