"""
Simulation Coordinator
Builds problems from scenarios, runs the collocation solver and the reference oracle,
and attaches comparison metrics to the run report
"""

import logging
import time
from dataclasses import replace
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from .domain_discretization import build_grid
from .event_dispatcher import EventType, SimulationEventManager
from .exceptions import InfiltrationError, ScenarioParseError
from .kirchhoff_transform import TransformContext
from .metrics import metric_l1, metric_rmse
from .nonlinear_stepper import InfiltrationProblem, run
from .reference_oracle import OracleColumn, OracleConfig, OracleResult, oracle_solve_1d
from .run_report import RunReport
from .scenario_loader import Scenario, ScenarioLoader

logger = logging.getLogger(__name__)


class SimulationCoordinator:
    """Main coordinator that ties scenarios, solver, oracle and reports together."""

    def __init__(self, data_directory: str = "soil_data", scenario_directory: str = "scenarios",
                 event_logging: bool = True, oracle_refinement: int = 4,
                 condition_limit: float = 1e14):
        self.loader = ScenarioLoader(data_directory, scenario_directory)
        self.event_manager = SimulationEventManager(event_logging=event_logging)
        self.oracle_refinement = oracle_refinement
        self.condition_limit = condition_limit

        self.performance_metrics = {
            'runs_completed': 0,
            'runs_failed': 0,
            'steps_taken': 0,
            'picard_iterations': 0,
            'oracle_runs': 0,
        }
        self.event_manager.subscribe_to_event(EventType.STEP_ACCEPTED, self._count_step)

    def _count_step(self, event):
        self.performance_metrics['steps_taken'] += 1
        self.performance_metrics['picard_iterations'] += event.data.get('iterations', 0)

    # Scenario access
    def load_scenario(self, path: str) -> Scenario:
        return self.loader.parse_scenario(path)

    def build_problem(self, scenario: Scenario) -> InfiltrationProblem:
        """Grid, transform context and numerics for one scenario."""
        cloud = build_grid(scenario.extents, scenario.counts, scenario.dims)
        context = TransformContext.build(
            scenario.soil, cloud.nodes, h_bar=scenario.h_bar,
            counts=(cloud.counts[0], cloud.counts[2]),
        )
        kernel = replace(scenario.kernel, condition_limit=self.condition_limit)
        return InfiltrationProblem(
            name=scenario.name,
            cloud=cloud,
            context=context,
            kernel=kernel,
            stepper=scenario.stepper,
            initial=scenario.initial,
            boundary=scenario.boundary,
            final_time=scenario.final_time,
            output_times=scenario.output_times,
        )

    def run_scenario(self, scenario: Scenario) -> RunReport:
        """Run the collocation solver and collect the report."""
        problem = self.build_problem(scenario)
        self.event_manager.run_started(scenario.name, problem.cloud.size, problem.step_count)
        started = time.perf_counter()
        try:
            result = run(problem, events=self.event_manager)
        except InfiltrationError as exc:
            self.performance_metrics['runs_failed'] += 1
            self.event_manager.run_failed(scenario.name, exc)
            raise
        report = RunReport.from_run(result, time.perf_counter() - started, scenario.units)
        self.performance_metrics['runs_completed'] += 1
        self.event_manager.run_completed(scenario.name, len(report.iterations),
                                         report.total_iterations)
        logger.info("run %s finished in %.1f s, mass balance error %.3e",
                    scenario.name, report.wall_clock, report.mass_balance_error)
        return report

    # Reference solutions
    def oracle_column(self, scenario: Scenario) -> OracleColumn:
        """The vertical column through the centre of the domain."""
        l1, l2, depth = scenario.extents
        position = (
            0.5 * l1 if scenario.dims >= 2 else 0.0,
            0.5 * l2 if scenario.dims == 3 else 0.0,
        )
        return OracleColumn(
            field=scenario.soil,
            length=depth,
            nodes=scenario.counts[2],
            initial_kind=scenario.initial.kind,
            initial_value=scenario.initial.value,
            initial_gradient=scenario.initial.gradient,
            top_head=scenario.boundary.top_head,
            bottom_head=scenario.boundary.bottom_head,
            final_time=scenario.final_time,
            output_times=scenario.output_times,
            position=position,
        )

    def run_oracle(self, scenario: Scenario) -> OracleResult:
        config = OracleConfig(dt=scenario.stepper.dt, refinement=self.oracle_refinement)
        logger.info("oracle for %s: refinement %d", scenario.name, config.refinement)
        result = oracle_solve_1d(self.oracle_column(scenario), config, events=self.event_manager)
        self.performance_metrics['oracle_runs'] += 1
        return result

    def compare_with_oracle(self, report: RunReport, oracle: OracleResult):
        """
        1D: RMSE and L1 error of theta at every output time. 2D/3D: relative
        difference between the cross-sectionally averaged mass and the oracle column mass.
        """
        report.reference = 'oracle'
        for snapshot in report.profiles:
            index = int(np.argmin(np.abs(np.asarray(oracle.times) - snapshot.time)))
            if report.dims == 1:
                theta_ref = oracle.coarse(oracle.theta[index])
                report.add_metric(
                    snapshot.time,
                    rmse=metric_rmse(snapshot.theta, theta_ref),
                    l1=metric_l1(snapshot.theta, theta_ref),
                )
            else:
                reference_mass = oracle.mass[index]
                report.add_metric(
                    snapshot.time,
                    mass=snapshot.mass,
                    reference_mass=reference_mass,
                    mass_difference=abs(snapshot.mass - reference_mass) / abs(reference_mass),
                )

    def compare_with_file(self, report: RunReport, path: str):
        """
        Compare with a long-format CSV holding ``time`` and ``theta`` columns, rows of
        each time in the node order of the run.
        """
        try:
            frame = pd.read_csv(path)
        except (OSError, ValueError) as exc:
            raise ScenarioParseError(f"cannot read reference: {exc}", path)
        missing = {'time', 'theta'} - set(frame.columns)
        if missing:
            raise ScenarioParseError(f"reference lacks columns {sorted(missing)}", path)
        report.reference = path
        times = np.unique(frame['time'].to_numpy(dtype=float))
        for snapshot in report.profiles:
            match = times[np.isclose(times, snapshot.time, rtol=1e-9, atol=1e-12)]
            if not len(match):
                logger.warning("reference %s has no profile at t=%g", path, snapshot.time)
                continue
            theta_ref = frame.loc[np.isclose(frame['time'], match[0]), 'theta'].to_numpy(dtype=float)
            report.add_metric(
                snapshot.time,
                rmse=metric_rmse(snapshot.theta, theta_ref),
                l1=metric_l1(snapshot.theta, theta_ref),
            )

    def verify(self, scenario: Scenario) -> Dict[str, Any]:
        """Solver run plus oracle run with metrics attached to the report."""
        report = self.run_scenario(scenario)
        oracle = self.run_oracle(scenario)
        self.compare_with_oracle(report, oracle)
        return {'report': report, 'oracle': oracle}

    def get_performance_metrics(self) -> Dict[str, Any]:
        return {**self.performance_metrics, 'events': self.event_manager.get_system_stats()}
