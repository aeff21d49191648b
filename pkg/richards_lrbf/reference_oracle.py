"""
Reference Oracle Module
Independent 1D head-based finite-difference Richards solver (mixed form,
modified Picard) and manufactured-solution checks of the spatial operators

The oracle works directly on pressure head and only borrows the constitutive laws;
none of the Kirchhoff or collocation machinery is involved in ``oracle_solve_1d``.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .domain_discretization import build_grid
from .exceptions import ConfigurationError, DomainError, NonConvergenceError
from .kirchhoff_transform import TransformContext
from .lrbf_operators import KernelConfig, OperatorAssembler
from .nonlinear_stepper import (
    BoundarySpec,
    InfiltrationProblem,
    InitialCondition,
    StepperConfig,
    run,
)
from .soil_constitutive import (
    HomogeneousField,
    MaterialArrays,
    SoilField,
    SoilParams,
    invert_saturation,
    relative_permeability,
    saturation,
    saturation_from_water_content,
    water_content,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleConfig:
    """Fine-grid factor, time step and modified-Picard stopping rule on head."""

    dt: float
    refinement: int = 4
    tol_abs: float = 1e-8
    tol_rel: float = 1e-8
    max_iterations: int = 50
    max_substep_depth: int = 6

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigurationError(f"oracle time step must be positive, got {self.dt}")
        if self.refinement < 1:
            raise ConfigurationError("oracle refinement must be at least 1")
        if not (self.tol_abs > 0.0 and self.tol_rel >= 0.0):
            raise ConfigurationError("oracle tolerances must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("oracle iteration cap must be at least 1")
        if self.max_substep_depth < 0:
            raise ConfigurationError("oracle sub-step depth must be non-negative")


@dataclass(frozen=True)
class OracleColumn:
    """
    A vertical soil column: geometry, coarse node count and initial/boundary heads.

    ``source`` is an optional volumetric source s(z, t) added to the water balance;
    the net inflow bookkeeping covers the boundary fluxes only.
    """

    field: SoilField
    length: float
    nodes: int
    initial_kind: str = 'head'
    initial_value: float = 0.0
    initial_gradient: float = 0.0
    top_head: float = 0.0
    bottom_head: Optional[float] = None
    final_time: float = 0.0
    output_times: Tuple[float, ...] = ()
    position: Tuple[float, float] = (0.0, 0.0)
    source: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if self.nodes < 3:
            raise ConfigurationError("an oracle column needs at least 3 nodes")
        if not self.length > 0.0:
            raise ConfigurationError("column length must be positive")


@dataclass
class OracleResult:
    """Profiles on the fine grid at the output times plus mass diagnostics."""

    z: np.ndarray
    refinement: int
    times: List[float] = field(default_factory=list)
    theta: List[np.ndarray] = field(default_factory=list)
    head: List[np.ndarray] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    initial_mass: float = 0.0
    final_mass: float = 0.0
    net_inflow: float = 0.0
    substeps: int = 0

    def coarse(self, profile: np.ndarray) -> np.ndarray:
        """Restriction of a fine-grid profile to the coarse nodes."""
        return np.asarray(profile)[:: self.refinement]

    def theta_at(self, time: float, coarse: bool = True) -> np.ndarray:
        index = int(np.argmin(np.abs(np.asarray(self.times) - time)))
        return self.coarse(self.theta[index]) if coarse else self.theta[index]

    @property
    def mass_balance_error(self) -> float:
        return abs(self.final_mass - self.initial_mass - self.net_inflow) / abs(self.final_mass)


def _initial_head(column: OracleColumn, z: np.ndarray, materials: MaterialArrays) -> np.ndarray:
    if column.initial_kind == 'head':
        return np.full(len(z), float(column.initial_value))
    if column.initial_kind == 'linear_head':
        return column.initial_value + column.initial_gradient * z
    if column.initial_kind == 'water_content':
        s = saturation_from_water_content(np.full(len(z), float(column.initial_value)), materials)
        return np.asarray(invert_saturation(s, materials), dtype=float)
    raise ConfigurationError(f"unknown initial condition kind '{column.initial_kind}'")


def capacity(h: np.ndarray, p) -> np.ndarray:
    """Specific moisture capacity d theta / dh of the Brooks-Corey law."""
    h = np.asarray(h, dtype=float)
    unsat = h <= p.h_d
    s = saturation(h, p)
    safe = np.where(unsat, h, -1.0)
    return np.where(unsat, p.phi_cap * (-p.lam / safe) * s, 0.0)


def _theta(h, p) -> np.ndarray:
    return np.asarray(water_content(saturation(h, p), p), dtype=float)


def _conductivity(h, p) -> np.ndarray:
    return p.k_s * np.asarray(relative_permeability(h, p), dtype=float)


def _trapezoid(values: np.ndarray, dz: float) -> float:
    return float(dz * (np.sum(values) - 0.5 * (values[0] + values[-1])))


class _ColumnSolver:
    """Backward-Euler modified-Picard steps on a fixed fine grid."""

    def __init__(self, z: np.ndarray, materials: MaterialArrays, config: OracleConfig,
                 source: Optional[Callable[[np.ndarray, float], np.ndarray]] = None):
        self.z = z
        self.dz = float(z[1] - z[0])
        self.p = materials
        self.config = config
        self.source = source

    def half_node_k(self, h: np.ndarray) -> np.ndarray:
        k = _conductivity(h, self.p)
        return 0.5 * (k[1:] + k[:-1])

    def fluxes(self, h: np.ndarray) -> Tuple[float, float]:
        """Upward Darcy flux -K (dh/dz + 1) at the first and last half node."""
        k_half = self.half_node_k(h)
        gradient = np.diff(h) / self.dz
        q = -k_half * (gradient + 1.0)
        return float(q[0]), float(q[-1])

    def step(self, h_old: np.ndarray, dt: float, time: float = 0.0) -> Tuple[np.ndarray, int]:
        """
        One implicit step ending at ``time``; the mixed-form update keeps the water
        balance exact at convergence.
        """
        cfg = self.config
        n = len(h_old)
        dz2 = self.dz ** 2
        theta_old = _theta(h_old, self.p)
        forcing = 0.0
        if self.source is not None:
            forcing = np.asarray(self.source(self.z[1:-1], time), dtype=float)
        h_m = h_old.copy()
        for m in range(1, cfg.max_iterations + 1):
            c = capacity(h_m, self.p)
            theta_m = _theta(h_m, self.p)
            k_half = self.half_node_k(h_m)
            k_minus, k_plus = k_half[:-1], k_half[1:]

            bands = np.zeros((3, n))
            rhs = h_m.copy()
            bands[1, 0] = bands[1, -1] = 1.0
            bands[0, 2:] = -k_plus / dz2
            bands[1, 1:-1] = c[1:-1] / dt + (k_plus + k_minus) / dz2
            bands[2, :-2] = -k_minus / dz2
            rhs[1:-1] = (
                c[1:-1] * h_m[1:-1] / dt
                + (k_plus - k_minus) / self.dz
                - (theta_m[1:-1] - theta_old[1:-1]) / dt
                + forcing
            )
            h_next = solve_banded((1, 1), bands, rhs)
            if not np.all(np.isfinite(h_next)):
                return h_next, -m
            change = np.abs(h_next - h_m)
            h_m = h_next
            if np.all(change <= cfg.tol_abs + cfg.tol_rel * np.abs(h_m)):
                return h_m, m
        return h_m, -cfg.max_iterations


def oracle_solve_1d(column: OracleColumn, config: OracleConfig, events=None) -> OracleResult:
    """
    Water-content profiles of a 1D column on a grid ``config.refinement`` times finer.

    A step whose Picard loop fails is retried as two half steps, recursively up to
    ``config.max_substep_depth`` levels.

    Raises:
        NonConvergenceError: a step still fails at the deepest sub-step level.
    """
    fine = config.refinement * (column.nodes - 1) + 1
    z = np.linspace(0.0, column.length, fine)
    x, y = column.position
    points = np.column_stack([np.full(fine, x), np.full(fine, y), z])
    materials = column.field.parameter_arrays(points)
    solver = _ColumnSolver(z, materials, config, column.source)

    h = _initial_head(column, z, materials)
    if column.bottom_head is not None:
        h[0] = column.bottom_head
    h[-1] = column.top_head
    dz = solver.dz
    result = OracleResult(z=z, refinement=config.refinement)
    result.initial_mass = _trapezoid(_theta(h, materials), dz)

    n_steps = int(round(column.final_time / config.dt))
    output_steps = {int(round(t / config.dt)) for t in column.output_times}
    logger.info("oracle: %d fine nodes, %d steps of %g", fine, n_steps, config.dt)

    def record(step):
        theta = _theta(h, materials)
        result.times.append(step * config.dt)
        result.theta.append(theta)
        result.head.append(h.copy())
        result.mass.append(_trapezoid(theta, dz))

    def advance(h_start, time, dt, depth):
        h_new, iterations = solver.step(h_start, dt, time + dt)
        if iterations > 0:
            q_bottom, q_top = solver.fluxes(h_new)
            result.net_inflow += dt * (q_bottom - q_top)
            return h_new
        if depth >= config.max_substep_depth:
            raise NonConvergenceError(-1, time, float('nan'), config.max_iterations)
        result.substeps += 1
        logger.warning("oracle step at t=%g split into halves (depth %d)", time, depth + 1)
        if events is not None:
            events.oracle_substep(time, depth + 1)
        h_half = advance(h_start, time, dt / 2.0, depth + 1)
        return advance(h_half, time + dt / 2.0, dt / 2.0, depth + 1)

    if 0 in output_steps:
        record(0)
    for step in range(1, n_steps + 1):
        try:
            h = advance(h, (step - 1) * config.dt, config.dt, 0)
        except NonConvergenceError as exc:
            raise NonConvergenceError(step, step * config.dt, exc.delta, exc.iterations)
        if step in output_steps:
            record(step)
    result.final_mass = _trapezoid(_theta(h, materials), dz)
    return result


@dataclass
class ConvergenceReport:
    """Error against spacing for a sequence of grids."""

    spacings: List[float]
    errors: List[float]

    @property
    def order(self) -> float:
        """Least-squares slope of log(error) against log(spacing)."""
        errors = np.asarray(self.errors)
        if np.any(errors <= 0.0):
            return float('nan')
        slope, _ = np.polyfit(np.log(self.spacings), np.log(errors), 1)
        return float(slope)

    @property
    def max_error(self) -> float:
        return float(max(self.errors))

    def to_dict(self) -> Dict:
        return {'spacings': self.spacings, 'errors': self.errors, 'order': self.order}


def _manufactured_fields(kind: str) -> Tuple[Callable, Callable, Callable]:
    """(u, u', u'') of the manufactured field on [0, 1]."""
    if kind == 'constant':
        return (lambda z: np.full_like(z, 0.7), np.zeros_like, np.zeros_like)
    if kind == 'linear':
        return (lambda z: 0.5 + 0.25 * z, lambda z: np.full_like(z, 0.25), np.zeros_like)
    if kind == 'sine':
        return (
            lambda z: 1.0 + 0.5 * np.sin(np.pi * z),
            lambda z: 0.5 * np.pi * np.cos(np.pi * z),
            lambda z: -0.5 * np.pi ** 2 * np.sin(np.pi * z),
        )
    raise DomainError(f"unknown manufactured field '{kind}'")


def _conductivity_profile(varying: bool) -> Tuple[Callable, Callable]:
    if varying:
        return (lambda z: 1.0 + 0.5 * z, lambda z: np.full_like(z, 0.5))
    return (lambda z: np.ones_like(z), np.zeros_like)


def manufactured_solution_residual(grid_sizes: Sequence[int], kind: str = 'sine',
                                   target: str = 'lrbf', varying_conductivity: bool = True,
                                   soil=None) -> ConvergenceReport:
    """
    Max-norm error of a discrete diffusion operator on a manufactured field.

    ``target='lrbf'`` checks the collocation interior rows (E = F = 0) against
    -(chi' u' + chi u''); ``target='oracle'`` checks the oracle's head operator
    d/dz(K (dh/dz + 1)) for head h = u - 2 on ``soil`` against K'(h' + 1) + K h''.
    """
    u, du, d2u = _manufactured_fields(kind)
    spacings, errors = [], []
    for n in grid_sizes:
        if n < 3:
            raise ConfigurationError("manufactured grids need at least 3 nodes")
        z = np.linspace(0.0, 1.0, n)
        dz = z[1] - z[0]
        inner = z[1:-1]
        if target == 'lrbf':
            discrete, exact = _lrbf_operator_error(z, u, du, d2u, varying_conductivity)
        elif target == 'oracle':
            if soil is None:
                raise ConfigurationError("the oracle operator check needs a soil")
            h = u(z) - 2.0
            k = _conductivity(h, soil)
            k_half = 0.5 * (k[1:] + k[:-1])
            flux = k_half * (np.diff(h) / dz + 1.0)
            discrete = np.diff(flux) / dz
            h_in = u(inner) - 2.0
            k_in = _conductivity(h_in, soil)
            dk = k_in * (-soil.lam * soil.beta) * du(inner) / h_in
            exact = dk * (du(inner) + 1.0) + k_in * d2u(inner)
        else:
            raise ConfigurationError(f"unknown operator target '{target}'")
        spacings.append(float(dz))
        errors.append(float(np.max(np.abs(discrete - exact))))
    logger.debug("manufactured %s/%s errors: %s", target, kind, errors)
    return ConvergenceReport(spacings=spacings, errors=errors)


def _lrbf_operator_error(z, u, du, d2u, varying):
    chi_fn, dchi_fn = _conductivity_profile(varying)
    cloud = build_grid((0.0, 0.0, 1.0), (1, 1, len(z)), dims=1)
    chi = chi_fn(cloud.nodes[:, 2])
    assembler = OperatorAssembler(cloud, chi, KernelConfig(shape=0.6, n_s=3))
    zeros = np.zeros(cloud.size)
    weights = assembler.interior_weights(zeros, zeros, 1.0)
    values = u(cloud.nodes[:, 2])
    discrete = np.sum(weights * values[assembler.columns], axis=1)
    inner = cloud.nodes[assembler.interior, 2]
    exact = -(dchi_fn(inner) * du(inner) + chi_fn(inner) * d2u(inner))
    return discrete, exact


# Forced manufactured runs: h(z, t) = -2 + z/2 + a t sin(pi z) on a unit column,
# driven by the source that makes it an exact solution of the head equation
MANUFACTURED_SOIL = SoilParams(theta_r=0.05, theta_s=0.45, k_s=1.0, h_d=-0.5, lam=0.5,
                               beta=5.0, name="manufactured")
FORCED_BOTTOM_HEAD = -2.0
FORCED_HEAD_GRADIENT = 0.5


def forced_head(z: np.ndarray, time: float, amplitude: float = 1.0) -> np.ndarray:
    """Manufactured head; its end values stay at -2 and -1.5 for every t."""
    z = np.asarray(z, dtype=float)
    return FORCED_BOTTOM_HEAD + FORCED_HEAD_GRADIENT * z + amplitude * time * np.sin(np.pi * z)


def forced_source(soil, amplitude: float = 1.0) -> Callable[[np.ndarray, float], np.ndarray]:
    """s(z, t) = C(h) h_t - d/dz(K (h_z + 1)) for the manufactured head on ``soil``."""
    def source(z, time):
        z = np.asarray(z, dtype=float)
        h = forced_head(z, time, amplitude)
        h_t = amplitude * np.sin(np.pi * z)
        h_z = FORCED_HEAD_GRADIENT + amplitude * time * np.pi * np.cos(np.pi * z)
        h_zz = -amplitude * time * np.pi ** 2 * np.sin(np.pi * z)
        k = _conductivity(h, soil)
        dk = -soil.lambda_beta * k / h
        return capacity(h, soil) * h_t - (dk * h_z * (h_z + 1.0) + k * h_zz)
    return source


def _forced_lrbf_head(nodes: int, dt: float, final_time: float, soil, source) -> np.ndarray:
    extents = (0.0, 0.0, 1.0)
    cloud = build_grid(extents, (1, 1, nodes), dims=1)
    context = TransformContext.build(HomogeneousField(extents=extents, soil=soil), cloud.nodes)
    problem = InfiltrationProblem(
        name=f"manufactured_{nodes}",
        cloud=cloud,
        context=context,
        kernel=KernelConfig(shape=0.6, n_s=3),
        stepper=StepperConfig(dt=dt, tol=1e-10),
        initial=InitialCondition(kind='linear_head', value=FORCED_BOTTOM_HEAD,
                                 gradient=FORCED_HEAD_GRADIENT),
        boundary=BoundarySpec(top_head=FORCED_BOTTOM_HEAD + FORCED_HEAD_GRADIENT,
                              bottom_head=FORCED_BOTTOM_HEAD),
        final_time=final_time,
        output_times=(final_time,),
        source=lambda points, time: source(points[:, 2], time),
    )
    return run(problem).final.h


def _forced_oracle_head(nodes: int, dt: float, final_time: float, soil, source) -> np.ndarray:
    column = OracleColumn(
        field=HomogeneousField(extents=(0.0, 0.0, 1.0), soil=soil),
        length=1.0,
        nodes=nodes,
        initial_kind='linear_head',
        initial_value=FORCED_BOTTOM_HEAD,
        initial_gradient=FORCED_HEAD_GRADIENT,
        top_head=FORCED_BOTTOM_HEAD + FORCED_HEAD_GRADIENT,
        bottom_head=FORCED_BOTTOM_HEAD,
        final_time=final_time,
        output_times=(final_time,),
        source=source,
    )
    config = OracleConfig(dt=dt, refinement=1, tol_abs=1e-12, tol_rel=1e-10)
    return oracle_solve_1d(column, config).head[-1]


def forced_manufactured_run(grid_sizes: Sequence[int], target: str = 'lrbf',
                            final_time: float = 0.1, amplitude: float = 1.0, soil=None,
                            dt_scale: float = 0.5) -> ConvergenceReport:
    """
    Max-norm head error at ``final_time`` of a full time-dependent run against the
    manufactured solution, with the matching source injected into the solver.

    ``target`` is 'lrbf' (Kirchhoff collocation stepper) or 'oracle' (head-based
    finite differences, no refinement). The time step is tied to the grid,
    dt <= dt_scale dz^2, so backward Euler and the spatial operator refine together.
    """
    if target not in ('lrbf', 'oracle'):
        raise ConfigurationError(f"unknown manufactured run target '{target}'")
    soil = soil or MANUFACTURED_SOIL
    if FORCED_BOTTOM_HEAD + FORCED_HEAD_GRADIENT + amplitude * final_time >= soil.h_d:
        raise ConfigurationError("the manufactured head must stay below the air-entry head")
    source = forced_source(soil, amplitude)
    solve = _forced_lrbf_head if target == 'lrbf' else _forced_oracle_head

    spacings, errors = [], []
    for n in grid_sizes:
        if n < 3:
            raise ConfigurationError("manufactured grids need at least 3 nodes")
        dz = 1.0 / (n - 1)
        steps = max(1, int(np.ceil(final_time / (dt_scale * dz ** 2))))
        h = solve(n, final_time / steps, final_time, soil, source)
        exact = forced_head(np.linspace(0.0, 1.0, n), final_time, amplitude)
        spacings.append(dz)
        errors.append(float(np.max(np.abs(h - exact))))
    logger.debug("forced manufactured %s errors: %s", target, errors)
    return ConvergenceReport(spacings=spacings, errors=errors)
