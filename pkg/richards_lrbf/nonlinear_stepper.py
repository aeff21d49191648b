"""
Nonlinear Stepper Module
Backward-Euler time stepping of the Kirchhoff-transformed Richards equation with
Picard linearization and a sparse global solve per iteration
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, bicgstab, spilu, splu

from .domain_discretization import BoundaryTag, PointCloud
from .exceptions import (
    ConfigurationError,
    LinearSolverError,
    NonConvergenceError,
)
from .kirchhoff_transform import KirchhoffState, TransformContext, forward
from .lrbf_operators import HeadLinearization, KernelConfig, OperatorAssembler
from .soil_constitutive import (
    invert_saturation,
    saturation_from_water_content,
)

logger = logging.getLogger(__name__)

LINEAR_SOLVERS = ('auto', 'direct', 'iterative')
INITIAL_KINDS = ('head', 'water_content', 'linear_head')
STORAGE_FORMS = ('conservative', 'lagged')

SourceTerm = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class StepperConfig:
    """
    Time step, Picard stopping rule and linear-solver settings.

    ``storage`` picks the time-derivative linearisation: 'conservative' writes it as
    (theta^m - theta^p)/dt + E^m (u^{m+1} - u^m)/dt, which converges to the exact
    change in water content; 'lagged' keeps E^m (u^{m+1} - u^p)/dt.
    """

    dt: float
    tol: float = 1e-6
    max_picard: int = 50
    linear_solver: str = 'auto'
    residual_target: float = 1e-10
    storage: str = 'conservative'

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if not self.tol > 0.0:
            raise ConfigurationError(f"Picard tolerance must be positive, got {self.tol}")
        if self.max_picard < 1:
            raise ConfigurationError(f"Picard cap must be at least 1, got {self.max_picard}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ConfigurationError(f"unknown linear solver '{self.linear_solver}'")
        if not self.residual_target > 0.0:
            raise ConfigurationError("residual target must be positive")
        if self.storage not in STORAGE_FORMS:
            raise ConfigurationError(f"unknown storage form '{self.storage}'")

    def to_dict(self) -> Dict:
        return {
            'dt': self.dt,
            'tol': self.tol,
            'max_picard': self.max_picard,
            'linear_solver': self.linear_solver,
            'storage': self.storage,
        }


@dataclass(frozen=True)
class InitialCondition:
    """
    Initial pressure head: uniform ``head``, uniform ``water_content`` or
    ``linear_head`` h0(z) = value + gradient * z.
    """

    kind: str = 'head'
    value: float = 0.0
    gradient: float = 0.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ConfigurationError(f"unknown initial condition kind '{self.kind}'")
        if self.kind != 'linear_head' and self.gradient != 0.0:
            raise ConfigurationError("a gradient is only meaningful for 'linear_head'")

    def head(self, points: np.ndarray, context: TransformContext) -> np.ndarray:
        """Nodal initial head at ``points`` (rows of ``context.materials``)."""
        n = len(points)
        if self.kind == 'head':
            return np.full(n, float(self.value))
        if self.kind == 'linear_head':
            return self.value + self.gradient * points[:, 2]
        materials = context.materials
        s = saturation_from_water_content(np.full(n, float(self.value)), materials)
        return np.asarray(invert_saturation(s, materials), dtype=float)

    def to_dict(self) -> Dict:
        data = {'kind': self.kind, 'value': self.value}
        if self.kind == 'linear_head':
            data['gradient'] = self.gradient
        return data


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet heads on z=L and z=0; ``bottom_head`` None keeps the initial head there."""

    top_head: float = 0.0
    bottom_head: Optional[float] = None

    def to_dict(self) -> Dict:
        return {'top_head': self.top_head, 'bottom_head': self.bottom_head}


@dataclass
class InfiltrationProblem:
    """
    Everything a run needs: grid, transform context, conditions and numerics.

    ``source`` is an optional volumetric source s(points, t) added to the water
    balance theta_t = -div q + s at the interior nodes.
    """

    name: str
    cloud: PointCloud
    context: TransformContext
    kernel: KernelConfig
    stepper: StepperConfig
    initial: InitialCondition
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    final_time: float = 0.0
    output_times: Tuple[float, ...] = ()
    source: Optional[SourceTerm] = None

    def __post_init__(self):
        if self.final_time < 0.0:
            raise ConfigurationError("final time must be non-negative")
        if any(t < 0.0 or t > self.final_time * (1.0 + 1e-12) for t in self.output_times):
            raise ConfigurationError("output times must lie in [0, final time]")

    @property
    def step_count(self) -> int:
        return int(round(self.final_time / self.stepper.dt))

    def output_steps(self) -> List[int]:
        """Output times snapped to multiples of the time step."""
        steps = sorted({int(round(t / self.stepper.dt)) for t in self.output_times})
        for t in self.output_times:
            if abs(round(t / self.stepper.dt) * self.stepper.dt - t) > 1e-9 * max(t, 1.0):
                logger.warning("output time %g snapped to the step grid", t)
        return steps


@dataclass
class GlobalSystem:
    """Sparse matrix and right-hand side of one Picard iteration."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray

    def check(self, dirichlet: Sequence[int] = ()):
        nnz = np.diff(self.matrix.indptr)
        empty = np.flatnonzero(nnz == 0)
        if len(empty):
            raise LinearSolverError("global matrix has empty rows", {'empty_rows': empty[:10].tolist()})
        dirichlet = np.asarray(dirichlet, dtype=int)
        if len(dirichlet) and np.any(nnz[dirichlet] != 1):
            raise LinearSolverError("Dirichlet rows must carry exactly one entry")


@dataclass(frozen=True)
class StepRecord:
    """Bookkeeping for one accepted time step."""

    step: int
    time: float
    iterations: int
    delta: float
    flux_bottom: float
    flux_top: float


@dataclass
class RunResult:
    """States at the requested output steps plus per-step diagnostics."""

    problem: InfiltrationProblem
    states: List[KirchhoffState] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)
    initial: Optional[KirchhoffState] = None
    final: Optional[KirchhoffState] = None
    assembly: Dict = field(default_factory=dict)

    @property
    def iterations(self) -> List[int]:
        return [s.iterations for s in self.steps]

    @property
    def output_times(self) -> List[float]:
        return [s.time for s in self.states]

    def net_inflow(self) -> float:
        """Time integral of q_bottom - q_top, right-endpoint rule as in backward Euler."""
        dt = self.problem.stepper.dt
        return float(sum(dt * (s.flux_bottom - s.flux_top) for s in self.steps))


def impose_dirichlet_heads(problem: InfiltrationProblem, h: np.ndarray) -> np.ndarray:
    """Copy of h carrying the prescribed top head (and bottom head when given)."""
    cloud = problem.cloud
    h = np.array(h, dtype=float)
    h[cloud.tags == BoundaryTag.TOP] = problem.boundary.top_head
    if problem.boundary.bottom_head is not None:
        h[cloud.tags == BoundaryTag.BOTTOM] = problem.boundary.bottom_head
    return h


def initial_state(problem: InfiltrationProblem) -> KirchhoffState:
    """Initial head with the Dirichlet heads imposed, and u = forward(h0)."""
    h0 = problem.initial.head(problem.cloud.nodes, problem.context)
    return KirchhoffState.from_head(problem.context, impose_dirichlet_heads(problem, h0), time=0.0)


def boundary_values(problem: InfiltrationProblem, h0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Right-hand side entries of the boundary rows, aligned with
    ``cloud.boundary_indices``: u of the prescribed head on top and bottom, 0 on the
    lateral sides.
    """
    cloud = problem.cloud
    boundary = cloud.boundary_indices
    tags = cloud.tags[boundary]
    if h0 is None:
        h0 = problem.initial.head(cloud.nodes, problem.context)
    heads = np.zeros(len(boundary))
    top = tags == BoundaryTag.TOP
    bottom = tags == BoundaryTag.BOTTOM
    heads[top] = problem.boundary.top_head
    if problem.boundary.bottom_head is None:
        heads[bottom] = h0[boundary[bottom]]
    else:
        heads[bottom] = problem.boundary.bottom_head

    values = np.zeros(len(boundary))
    dirichlet = top | bottom
    if np.any(dirichlet):
        materials = problem.context.materials.take(boundary[dirichlet])
        values[dirichlet] = np.asarray(
            forward(heads[dirichlet], materials, problem.context.h_bar), dtype=float
        )
    return values


def _residual(matrix: sparse.csr_matrix, u: np.ndarray, rhs: np.ndarray) -> Tuple[float, np.ndarray]:
    r = rhs - matrix @ u
    scale = float(np.max(np.abs(rhs))) or 1.0
    return float(np.max(np.abs(r))) / scale, r


def solve_sparse(system: GlobalSystem, method: str = 'direct', residual_target: float = 1e-10,
                 x0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve the global system and check ||Au - b||_inf / ||b||_inf.

    ``method`` is 'direct' (sparse LU) or 'iterative' (BiCGSTAB with an incomplete-LU
    preconditioner). One step of iterative refinement is tried before giving up.
    """
    matrix = system.matrix.tocsc()
    rhs = np.asarray(system.rhs, dtype=float)
    n = matrix.shape[0]
    try:
        if method == 'direct':
            lu = splu(matrix)
            correct = lu.solve
        elif method == 'iterative':
            ilu = spilu(matrix, drop_tol=1e-6, fill_factor=20)
            preconditioner = LinearOperator((n, n), ilu.solve)

            def correct(b, guess=None):
                x, info = bicgstab(matrix, b, x0=guess, rtol=residual_target * 1e-2, atol=0.0,
                                   M=preconditioner, maxiter=10 * n)
                if info < 0:
                    raise LinearSolverError("BiCGSTAB breakdown", {'info': int(info)})
                return x
        else:
            raise ConfigurationError(f"unknown linear solver '{method}'")
        u = correct(rhs, x0) if method == 'iterative' else correct(rhs)
    except RuntimeError as exc:
        raise LinearSolverError(f"sparse factorisation failed: {exc}", _diagnostics(system))

    residual, r = _residual(system.matrix, u, rhs)
    if not np.isfinite(residual) or residual > residual_target:
        u = u + correct(r)
        residual, r = _residual(system.matrix, u, rhs)
    if not np.isfinite(residual) or residual > residual_target:
        diagnostics = _diagnostics(system)
        diagnostics.update({'residual': residual, 'worst_row': int(np.argmax(np.abs(r)))})
        raise LinearSolverError(
            f"linear solve missed the residual target ({residual:.3e} > {residual_target:.1e})",
            diagnostics,
        )
    return u


def _diagnostics(system: GlobalSystem) -> Dict:
    nnz = np.diff(system.matrix.tocsr().indptr)
    return {
        'size': int(system.matrix.shape[0]),
        'nnz': int(system.matrix.nnz),
        'empty_rows': np.flatnonzero(nnz == 0)[:10].tolist(),
    }


def resolve_solver(method: str, dims: int) -> str:
    if method == 'auto':
        return 'direct' if dims <= 2 else 'iterative'
    return method


class PicardStepper:
    """Advances the Kirchhoff state one time step at a time."""

    def __init__(self, problem: InfiltrationProblem, events=None,
                 assembler: Optional[OperatorAssembler] = None):
        self.problem = problem
        self.events = events
        self.assembler = assembler or OperatorAssembler(
            problem.cloud, problem.context.chi, problem.kernel,
            region=problem.context.materials.region,
        )
        self.solver = resolve_solver(problem.stepper.linear_solver, problem.cloud.dims)
        cloud = problem.cloud
        self._boundary = cloud.boundary_indices
        self._interior = self.assembler.interior
        self._boundary_rhs = None
        # (F, G, linearisation) of the last assembled system
        self._lagged = None

    def set_boundary_data(self, h0: np.ndarray):
        self._boundary_rhs = boundary_values(self.problem, h0)

    def build_system(self, h: np.ndarray, u: np.ndarray, previous: KirchhoffState,
                     time: Optional[float] = None) -> GlobalSystem:
        """
        Assemble A and f with E, F, G lagged at the iterate (u, h).

        ``previous`` is the accepted state of the last time level and ``time`` the
        new one (default previous.time + dt), at which a source term is sampled.
        """
        problem = self.problem
        context = problem.context
        cfg = problem.stepper
        s = self._interior
        e, f, g = context.coefficients(h)
        lagged = HeadLinearization(u=u, h=h, conductivity=context.conductivity(h))
        matrix = self.assembler.assemble(e, f, cfg.dt, lagged)

        if cfg.storage == 'conservative':
            interior = self.assembler.interior_rhs(e, g, u, cfg.dt, lagged)
            theta_change = context.water_content(h) - context.water_content(previous.h)
            interior -= theta_change[s] / cfg.dt
        else:
            interior = self.assembler.interior_rhs(e, g, previous.u, cfg.dt, lagged)
        if problem.source is not None:
            when = previous.time + cfg.dt if time is None else time
            interior += np.asarray(problem.source(problem.cloud.nodes[s], when), dtype=float)

        rhs = np.zeros(problem.cloud.size)
        rhs[s] = interior
        rhs[self._boundary] = self._boundary_rhs
        self._lagged = (f, g, lagged)
        return GlobalSystem(matrix=matrix, rhs=rhs)

    def picard_iterate(self, state: KirchhoffState, step: int) -> Tuple[KirchhoffState, int, float]:
        """
        One backward-Euler step: iterate until max|u^{m+1} - u^m| <= tol.

        Entries of a linear solve that land on u <= 0, where the inverse transform
        is undefined, are replaced by half the previous iterate; such an iterate
        never counts as converged.

        Raises:
            NonConvergenceError: the cap is reached.
        """
        cfg = self.problem.stepper
        context = self.problem.context
        time = step * cfg.dt
        if self._boundary_rhs is None:
            self.set_boundary_data(state.h)

        u_m = state.u
        h_m = state.h
        delta = np.inf
        for m in range(1, cfg.max_picard + 1):
            system = self.build_system(h_m, u_m, state, time)
            if m == 1:
                system.check(self.assembler.dirichlet)
            u_next = solve_sparse(system, self.solver, cfg.residual_target, x0=u_m)
            undershoot = ~(u_next > 0.0)
            if np.any(undershoot):
                logger.debug("step %d iteration %d: %d nodes held at half their value",
                             step, m, int(np.count_nonzero(undershoot)))
                u_next = np.where(undershoot, 0.5 * u_m, u_next)
            delta = float(np.max(np.abs(u_next - u_m)))
            logger.debug("step %d iteration %d: delta=%.3e", step, m, delta)
            if self.events is not None:
                self.events.picard_iteration(step, m, delta)
            u_m, h_m = u_next, context.inverse(u_next)
            if delta <= cfg.tol and not np.any(undershoot):
                if m > cfg.max_picard // 2:
                    logger.warning("slow Picard convergence at step %d: %d iterations", step, m)
                return KirchhoffState(u=u_m, h=h_m, time=time), m, delta
        raise NonConvergenceError(step, time, delta, cfg.max_picard)

    def boundary_fluxes(self, state: KirchhoffState) -> Tuple[float, float]:
        """
        Upward Darcy flux at the half nodes next to z=0 and z=L, averaged over the
        horizontal cross-section.

        The fluxes use the coefficients of the last assembled system, so they are the
        ones the interior rows difference and the water balance closes on them.
        """
        cloud = self.problem.cloud
        if self._lagged is None:
            context = self.problem.context
            _, f, g = context.coefficients(state.h)
            lagged = HeadLinearization(u=state.u, h=state.h,
                                       conductivity=context.conductivity(state.h))
        else:
            f, g, lagged = self._lagged
        index = cloud.as_grid(np.arange(cloud.size))
        q_bottom = self.assembler.vertical_flux(
            index[..., 0].ravel(), index[..., 1].ravel(), state.u, f, g, lagged
        )
        q_top = self.assembler.vertical_flux(
            index[..., -2].ravel(), index[..., -1].ravel(), state.u, f, g, lagged
        )
        return float(np.mean(q_bottom)), float(np.mean(q_top))


def run(problem: InfiltrationProblem, events=None) -> RunResult:
    """
    Integrate from t=0 to the final time with a fixed step.

    States are kept at the output steps only; every accepted step contributes
    its iteration count and boundary fluxes.
    """
    state = initial_state(problem)
    stepper = PicardStepper(problem, events=events)
    stepper.set_boundary_data(state.h)
    result = RunResult(problem=problem, initial=state, assembly=stepper.assembler.stats.to_dict())

    output_steps = set(problem.output_steps())
    n_steps = problem.step_count
    logger.info("run %s: %d nodes, %d steps of %g, solver %s",
                problem.name, problem.cloud.size, n_steps, problem.stepper.dt, stepper.solver)
    if 0 in output_steps:
        result.states.append(state)
        if events is not None:
            events.output_recorded(0, state.time)

    for step in range(1, n_steps + 1):
        state, iterations, delta = stepper.picard_iterate(state, step)
        q_bottom, q_top = stepper.boundary_fluxes(state)
        result.steps.append(StepRecord(step, state.time, iterations, delta, q_bottom, q_top))
        if events is not None:
            events.step_accepted(step, state.time, iterations, delta)
        if step in output_steps:
            result.states.append(state)
            logger.info("output at t=%g (step %d, %d iterations)", state.time, step, iterations)
            if events is not None:
                events.output_recorded(step, state.time)

    result.final = state
    return result
