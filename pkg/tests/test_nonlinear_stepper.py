"""Tests for the Picard stepper, the sparse solves and the time loop."""

import logging

import numpy as np
import pytest
from scipy import sparse

from richards_lrbf import nonlinear_stepper
from richards_lrbf.event_dispatcher import EventType, SimulationEventManager
from richards_lrbf.exceptions import ConfigurationError, LinearSolverError, NonConvergenceError
from richards_lrbf.metrics import is_nondecreasing, mass_balance_error, total_mass
from richards_lrbf.nonlinear_stepper import (
    BoundarySpec,
    GlobalSystem,
    InitialCondition,
    StepperConfig,
    boundary_values,
    initial_state,
    resolve_solver,
    run,
    solve_sparse,
)
from richards_lrbf.soil_constitutive import LayeredField

from .conftest import make_clay_problem


def poisson_matrix(n):
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1],
                        format='csr')


def test_stepper_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=1e-3, tol=0.0)
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=1e-3, max_picard=0)
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=1e-3, linear_solver='cholesky')
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=1e-3, storage='explicit')
    assert StepperConfig(dt=1e-3).to_dict() == {
        'dt': 1e-3, 'tol': 1e-6, 'max_picard': 50, 'linear_solver': 'auto',
        'storage': 'conservative',
    }


def test_resolve_solver():
    assert resolve_solver('auto', 1) == 'direct'
    assert resolve_solver('auto', 2) == 'direct'
    assert resolve_solver('auto', 3) == 'iterative'
    assert resolve_solver('iterative', 1) == 'iterative'


def test_solve_identity():
    rhs = np.array([1.0, -2.0, 3.5])
    u = solve_sparse(GlobalSystem(sparse.identity(3, format='csr'), rhs))
    np.testing.assert_array_equal(u, rhs)


def test_direct_solve_matches_dense():
    rng = np.random.default_rng(0)
    matrix = poisson_matrix(50)
    rhs = rng.random(50)
    u = solve_sparse(GlobalSystem(matrix, rhs), 'direct')
    expected = np.linalg.solve(matrix.toarray(), rhs)
    np.testing.assert_allclose(u, expected, rtol=1e-12, atol=1e-12 * np.max(np.abs(expected)))


def test_iterative_solve_meets_residual_target():
    rng = np.random.default_rng(1)
    n = 200
    matrix = (sparse.random(n, n, density=0.02, random_state=1)
              + 10.0 * sparse.identity(n)).tocsr()
    rhs = rng.random(n)
    u = solve_sparse(GlobalSystem(matrix, rhs), 'iterative', residual_target=1e-10)
    residual = np.max(np.abs(matrix @ u - rhs)) / np.max(np.abs(rhs))
    assert residual <= 1e-10


def test_singular_system_reports_diagnostics():
    matrix = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(LinearSolverError) as excinfo:
        solve_sparse(GlobalSystem(matrix, np.ones(2)), 'direct')
    assert excinfo.value.diagnostics['size'] == 2
    with pytest.raises(LinearSolverError):
        GlobalSystem(matrix, np.ones(2)).check()


def test_initial_condition_kinds(clay_problem):
    problem = clay_problem(initial=InitialCondition(kind='water_content', value=0.226))
    state = initial_state(problem)
    np.testing.assert_allclose(state.h[:-1], -1050.9, rtol=1e-3)
    theta = state.water_content(problem.context)
    np.testing.assert_allclose(theta[:-1], 0.226, rtol=1e-12)
    # the top node already carries the boundary head
    assert theta[-1] == pytest.approx(0.475)

    problem = clay_problem(initial=InitialCondition(kind='linear_head', value=0.0, gradient=-1.0))
    h = initial_state(problem).h
    np.testing.assert_allclose(h[:-1], -problem.cloud.nodes[:-1, 2])
    assert h[-1] == 0.0

    with pytest.raises(ConfigurationError):
        InitialCondition(kind='head', value=-1.0, gradient=2.0)
    with pytest.raises(ConfigurationError):
        InitialCondition(kind='saturation', value=0.5)


def test_boundary_values(clay_problem):
    problem = clay_problem()
    values = boundary_values(problem)
    np.testing.assert_array_equal(problem.cloud.boundary_indices, [0, 20])
    assert values[0] == pytest.approx(0.06784, rel=1e-3)
    assert values[1] == pytest.approx(0.640939, abs=1e-6)

    problem = clay_problem(boundary=BoundarySpec(top_head=0.0, bottom_head=0.0))
    np.testing.assert_allclose(boundary_values(problem), 0.640939, atol=1e-6)


def test_zero_final_time_returns_the_initial_state(clay_problem):
    result = run(clay_problem(final_time=0.0, output_times=(0.0,)))
    assert result.steps == []
    assert len(result.states) == 1
    np.testing.assert_allclose(result.final.h[:-1], -1.0)
    assert result.final.h[-1] == 0.0
    assert result.net_inflow() == 0.0


def test_output_times_snap_to_the_step_grid(clay_problem, caplog):
    problem = clay_problem(final_time=0.005, output_times=(0.0, 0.0021, 0.005))
    with caplog.at_level(logging.WARNING):
        assert problem.output_steps() == [0, 2, 5]
    assert "snapped" in caplog.text
    with pytest.raises(ConfigurationError):
        clay_problem(final_time=0.005, output_times=(0.01,))


def test_forced_nonconvergence(clay_problem):
    problem = clay_problem(final_time=0.002, tol=1e-300, max_picard=1)
    with pytest.raises(NonConvergenceError) as excinfo:
        run(problem)
    assert excinfo.value.time_level == 1
    assert excinfo.value.iterations == 1
    assert excinfo.value.time == pytest.approx(0.001)


def test_small_infiltration_run(clay_problem):
    times = tuple(0.001 * k for k in range(11))
    problem = clay_problem(final_time=0.01, output_times=times)
    events = SimulationEventManager(event_logging=False)
    result = run(problem, events=events)

    assert len(result.states) == 11
    assert len(result.steps) == 10
    assert all(1 <= m <= 50 for m in result.iterations)

    masses = [total_mass(s.water_content(problem.context), problem.cloud) for s in result.states]
    assert is_nondecreasing(masses)
    for state in result.states:
        assert np.all(state.saturation(problem.context) <= 1.0)
    assert mass_balance_error(masses[0], masses[-1], result.net_inflow()) <= 1e-3
    # water enters through the top
    assert result.steps[-1].flux_top < 0.0

    assert len(events.get_recent_events(EventType.STEP_ACCEPTED, limit=100)) == 10
    assert len(events.get_recent_events(EventType.OUTPUT_RECORDED, limit=100)) == 11
    assert len(events.get_recent_events(EventType.PICARD_ITERATION, limit=1000)) == sum(
        result.iterations
    )


def column_masses(problem, result):
    return [total_mass(s.water_content(problem.context), problem.cloud) for s in result.states]


@pytest.mark.parametrize("material", ["clay", "sand"])
def test_water_balance_closes(table1_soils, material):
    times = tuple(0.001 * k for k in range(6))
    problem = make_clay_problem(table1_soils[material], final_time=0.005, output_times=times)
    result = run(problem)
    masses = column_masses(problem, result)
    assert mass_balance_error(masses[0], masses[-1], result.net_inflow()) <= 1e-3


def test_layered_column_couples_the_materials(table1_soils):
    field = LayeredField(extents=(0.0, 0.0, 1.0), layers=(
        (0.0, 0.5, table1_soils["sand"]), (0.5, 1.0, table1_soils["clay"]),
    ))
    times = tuple(0.001 * k for k in range(6))
    problem = make_clay_problem(table1_soils["clay"], field=field, final_time=0.005,
                                output_times=times)
    stepper = nonlinear_stepper.PicardStepper(problem)
    assert stepper.assembler.stats.interface_sides == 2

    result = run(problem)
    assert all(m <= 50 for m in result.iterations)
    for state in result.states:
        assert np.all(state.u > 0.0)
        assert np.all(np.isfinite(state.h))
        assert np.all(state.saturation(problem.context) <= 1.0)
    masses = column_masses(problem, result)
    assert mass_balance_error(masses[0], masses[-1], result.net_inflow()) <= 1e-3


def test_nonpositive_iterate_is_halved_and_iterated_again(clay_problem, monkeypatch):
    solve = nonlinear_stepper.solve_sparse
    calls = []

    def flip_first_solve(system, *args, **kwargs):
        u = solve(system, *args, **kwargs)
        calls.append(len(calls))
        if len(calls) == 1:
            u = np.array(u)
            u[5] = -abs(u[5])
        return u

    monkeypatch.setattr(nonlinear_stepper, "solve_sparse", flip_first_solve)
    result = run(clay_problem(final_time=0.001, output_times=(0.0, 0.001)))
    assert result.iterations[0] >= 2
    assert np.all(result.final.u > 0.0)
    assert np.all(np.isfinite(result.final.h))


def test_lagged_storage_runs_close_to_conservative(clay_problem):
    times = tuple(0.001 * k for k in range(6))
    conservative = clay_problem(final_time=0.005, output_times=times)
    lagged = clay_problem(final_time=0.005, output_times=times, storage="lagged")
    theta = [run(p).final.water_content(p.context) for p in (conservative, lagged)]
    np.testing.assert_allclose(theta[1], theta[0], atol=1e-2)
    assert lagged.stepper.to_dict()["storage"] == "lagged"
