"""
Richards LRBF command line
Run scenarios, verify them against the reference oracle and list the shipped soil tables

Exit codes: 0 success, 1 parse or configuration error, 2 nonconvergence or solver
failure, 3 metric threshold exceeded.
"""

import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Tuple

import click

from richards_lrbf import create_coordinator
from richards_lrbf.exceptions import (
    ConfigurationError,
    DomainError,
    InfiltrationError,
    OutputError,
    ScenarioParseError,
)
from richards_lrbf.output_writer import parse_formats, write_outputs
from richards_lrbf.settings import configure_logging, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_METRIC = 3

# acceptance bounds applied when no threshold flag is given
MAX_RMSE = 5e-3
MAX_MASS_BALANCE = 1e-3
MAX_MASS_DIFFERENCE = 2e-2


def exit_code_for(error: Exception) -> int:
    """Configuration problems map to 1; solver failures and anything unexpected to 2."""
    if isinstance(error, (ScenarioParseError, ConfigurationError, DomainError, OutputError)):
        return EXIT_CONFIG
    return EXIT_SOLVER


def _coordinator(settings):
    return create_coordinator(settings)


def _load(coordinator, scenario_file: str, grid_scale, dt, final_time):
    scenario = coordinator.load_scenario(scenario_file)
    if grid_scale is not None or dt is not None or final_time is not None:
        scenario = scenario.with_overrides(grid_scale=grid_scale, dt=dt, final_time=final_time)
    return scenario


def threshold_failures(report, max_rmse=MAX_RMSE, max_mass_balance=MAX_MASS_BALANCE,
                       max_mass_difference=MAX_MASS_DIFFERENCE) -> list:
    """Human-readable list of violated thresholds; a None bound is skipped."""
    failures = []
    worst = report.worst_metric('rmse')
    if max_rmse is not None and worst is not None and worst > max_rmse:
        failures.append(f"RMSE {worst:.3e} exceeds {max_rmse:.3e}")
    if max_mass_balance is not None and report.mass_balance_error > max_mass_balance:
        failures.append(
            f"mass balance error {report.mass_balance_error:.3e} exceeds {max_mass_balance:.3e}"
        )
    worst = report.worst_metric('mass_difference')
    if max_mass_difference is not None and worst is not None and worst > max_mass_difference:
        failures.append(f"mass difference {worst:.3e} exceeds {max_mass_difference:.3e}")
    return failures


def _echo_metrics(report):
    for entry in report.metrics:
        values = ', '.join(f"{k}={v:.6e}" for k, v in entry.items() if k != 'time')
        click.echo(f"  t={entry['time']:g}: {values}")
    click.echo(f"  mass balance error: {report.mass_balance_error:.6e}")
    click.echo(f"  Picard iterations: total {report.total_iterations}, "
               f"median {report.median_iterations:g}")


def _scale_options(f):
    f = click.option('--final-time', type=float, default=None, help='Override the final time.')(f)
    f = click.option('--dt', type=float, default=None, help='Override the time step.')(f)
    f = click.option('--grid-scale', type=float, default=None,
                     help='Scale the node count of every active axis.')(f)
    return f


@click.group()
@click.option('--log-level', default=None, help='Logging level (default from environment).')
@click.option('--data-dir', default=None, help='Directory of the soil tables.')
@click.option('--scenario-dir', default=None, help='Directory of the shipped scenarios.')
@click.option('--env-file', default=None, type=click.Path(dir_okay=False),
              help='Read environment overrides from this file.')
@click.pass_context
def cli(ctx, log_level, data_dir, scenario_dir, env_file):
    """Infiltration in heterogeneous soils with localized RBF collocation."""
    settings = load_settings(
        {'log_level': log_level, 'data_directory': data_dir, 'scenario_directory': scenario_dir},
        env_file=env_file,
    )
    configure_logging(settings['log_level'])
    ctx.obj = settings


@cli.command('run')
@click.argument('scenario_file')
@click.option('--out', 'out_dir', default=None, help='Output directory.')
@_scale_options
@click.option('--reference', default=None, help="'oracle' or a reference CSV file.")
@click.option('--formats', default='csv', show_default=True, help='Comma-separated: csv,vtk.')
@click.option('--max-rmse', type=float, default=MAX_RMSE, show_default=True,
              help='Fail with exit code 3 above this RMSE (needs --reference).')
@click.pass_obj
def run_command(settings, scenario_file, out_dir, grid_scale, dt, final_time, reference, formats,
                max_rmse):
    """Run one scenario and write its result files."""
    coordinator = _coordinator(settings)
    try:
        formats = parse_formats(formats)
        scenario = _load(coordinator, scenario_file, grid_scale, dt, final_time)
        report = coordinator.run_scenario(scenario)
        if reference == 'oracle':
            coordinator.compare_with_oracle(report, coordinator.run_oracle(scenario))
        elif reference:
            coordinator.compare_with_file(report, reference)
        written = write_outputs(report, out_dir or settings['output_directory'], formats)
    except InfiltrationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exit_code_for(exc))

    click.echo(f"{scenario.name}: {len(written)} files written")
    _echo_metrics(report)
    failures = threshold_failures(report, max_rmse=max_rmse, max_mass_balance=None,
                                  max_mass_difference=None)
    for failure in failures:
        click.echo(f"threshold: {failure}", err=True)
    sys.exit(EXIT_METRIC if failures else EXIT_OK)


@cli.command('verify')
@click.argument('scenario_file')
@_scale_options
@click.option('--max-rmse', type=float, default=MAX_RMSE, show_default=True,
              help='Largest acceptable RMSE (1D).')
@click.option('--max-mass-balance', type=float, default=MAX_MASS_BALANCE, show_default=True,
              help='Largest acceptable relative mass-balance error.')
@click.option('--max-mass-difference', type=float, default=MAX_MASS_DIFFERENCE,
              show_default=True,
              help='Largest acceptable relative mass difference to the oracle column (2D/3D).')
@click.pass_obj
def verify_command(settings, scenario_file, grid_scale, dt, final_time, max_rmse,
                   max_mass_balance, max_mass_difference):
    """Run the solver and the finite-difference oracle and report the errors."""
    coordinator = _coordinator(settings)
    try:
        scenario = _load(coordinator, scenario_file, grid_scale, dt, final_time)
        outcome = coordinator.verify(scenario)
    except InfiltrationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exit_code_for(exc))

    report, oracle = outcome['report'], outcome['oracle']
    click.echo(f"{scenario.name} against the oracle (refinement {oracle.refinement}):")
    _echo_metrics(report)
    click.echo(f"  oracle mass balance error: {oracle.mass_balance_error:.6e}")
    failures = threshold_failures(report, max_rmse, max_mass_balance, max_mass_difference)
    for failure in failures:
        click.echo(f"threshold: {failure}", err=True)
    sys.exit(EXIT_METRIC if failures else EXIT_OK)


@cli.command('tables')
@click.pass_obj
def tables_command(settings):
    """List the shipped soil tables."""
    coordinator = _coordinator(settings)
    try:
        summaries = coordinator.loader.tables.get_table_summaries()
    except InfiltrationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exit_code_for(exc))
    for table in summaries:
        click.echo(f"{table['name']} [{table['units']}]: {', '.join(table['soils'])}")
        if table['description']:
            click.echo(f"  {table['description']}")


def batch_worker(job: Tuple) -> Tuple[str, int, str]:
    """Run and write one scenario in a worker process."""
    settings, scenario_file, out_dir, grid_scale, dt, final_time, formats = job
    coordinator = create_coordinator(settings)
    try:
        scenario = _load(coordinator, scenario_file, grid_scale, dt, final_time)
        report = coordinator.run_scenario(scenario)
        written = write_outputs(report, os.path.join(out_dir, scenario.name), formats)
    except InfiltrationError as exc:
        return scenario_file, exit_code_for(exc), str(exc)
    return scenario_file, EXIT_OK, f"{len(written)} files"


@cli.command('batch')
@click.argument('scenario_files', nargs=-1, required=True)
@click.option('--out', 'out_dir', default=None, help='Output directory (one subdirectory per run).')
@_scale_options
@click.option('--formats', default='csv', show_default=True, help='Comma-separated: csv,vtk.')
@click.option('--workers', type=int, default=None, help='Worker processes.')
@click.pass_obj
def batch_command(settings, scenario_files, out_dir, grid_scale, dt, final_time, formats,
                  workers: Optional[int]):
    """Run several scenarios in independent worker processes."""
    try:
        formats = parse_formats(formats)
    except InfiltrationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exit_code_for(exc))
    out_dir = out_dir or settings['output_directory']
    jobs = [(settings, f, out_dir, grid_scale, dt, final_time, formats) for f in scenario_files]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(batch_worker, jobs))
    worst = EXIT_OK
    for scenario_file, code, message in results:
        click.echo(f"{scenario_file}: {'ok' if code == EXIT_OK else 'failed'} ({message})")
        worst = max(worst, code)
    sys.exit(worst)


if __name__ == '__main__':
    cli()
