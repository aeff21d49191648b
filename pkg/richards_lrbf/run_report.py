"""
Run Report Module
Profiles, mass series, iteration counts and metrics collected from one simulation run
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .metrics import mass_balance_error, total_mass
from .nonlinear_stepper import RunResult

logger = logging.getLogger(__name__)


@dataclass
class ProfileSnapshot:
    """Nodal fields at one output time."""

    time: float
    theta: np.ndarray
    head: np.ndarray
    saturation: np.ndarray
    kirchhoff: np.ndarray
    mass: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'time': self.time,
            'theta': self.theta.tolist(),
            'head': self.head.tolist(),
            'saturation': self.saturation.tolist(),
            'kirchhoff': self.kirchhoff.tolist(),
            'mass': self.mass,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ProfileSnapshot':
        return cls(
            time=float(data['time']),
            theta=np.asarray(data['theta'], dtype=float),
            head=np.asarray(data['head'], dtype=float),
            saturation=np.asarray(data['saturation'], dtype=float),
            kirchhoff=np.asarray(data['kirchhoff'], dtype=float),
            mass=float(data['mass']),
        )


class RunReport:
    """Everything a finished run hands to the output writer and the CLI."""

    def __init__(self, scenario: str, dims: int, nodes: np.ndarray, counts, extents,
                 units: Optional[Dict[str, str]] = None):
        self.scenario = scenario
        self.dims = dims
        self.nodes = np.asarray(nodes, dtype=float)
        self.counts = tuple(int(c) for c in counts)
        self.extents = tuple(float(e) for e in extents)
        self.units = dict(units or {})
        self.profiles: List[ProfileSnapshot] = []
        self.iterations: List[int] = []
        self.step_times: List[float] = []
        self.flux_bottom: List[float] = []
        self.flux_top: List[float] = []
        self.initial_mass = 0.0
        self.final_mass = 0.0
        self.net_inflow = 0.0
        self.wall_clock = 0.0
        self.metrics: List[Dict[str, Any]] = []
        self.reference: Optional[str] = None
        self.assembly: Dict[str, Any] = {}

    @classmethod
    def from_run(cls, result: RunResult, wall_clock: float = 0.0,
                 units: Optional[Dict[str, str]] = None) -> 'RunReport':
        """Convert solver states into water content, saturation and mass."""
        problem = result.problem
        cloud, context = problem.cloud, problem.context
        report = cls(problem.name, cloud.dims, cloud.nodes, cloud.counts, cloud.extents, units)
        for state in result.states:
            theta = np.asarray(state.water_content(context), dtype=float)
            report.profiles.append(ProfileSnapshot(
                time=state.time,
                theta=theta,
                head=np.asarray(state.h, dtype=float),
                saturation=np.asarray(state.saturation(context), dtype=float),
                kirchhoff=np.asarray(state.u, dtype=float),
                mass=total_mass(theta, cloud),
            ))
        report.iterations = result.iterations
        report.step_times = [s.time for s in result.steps]
        report.flux_bottom = [s.flux_bottom for s in result.steps]
        report.flux_top = [s.flux_top for s in result.steps]
        report.initial_mass = total_mass(result.initial.water_content(context), cloud)
        report.final_mass = total_mass(result.final.water_content(context), cloud)
        report.net_inflow = result.net_inflow()
        report.wall_clock = wall_clock
        report.assembly = dict(result.assembly)
        return report

    @property
    def output_times(self) -> List[float]:
        return [p.time for p in self.profiles]

    @property
    def mass_series(self) -> List[float]:
        return [p.mass for p in self.profiles]

    @property
    def mass_balance_error(self) -> float:
        return mass_balance_error(self.initial_mass, self.final_mass, self.net_inflow)

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))

    @property
    def median_iterations(self) -> float:
        return float(np.median(self.iterations)) if self.iterations else 0.0

    def add_metric(self, time: float, **values):
        entry = {'time': float(time)}
        entry.update({k: float(v) for k, v in values.items()})
        self.metrics.append(entry)

    def worst_metric(self, name: str) -> Optional[float]:
        values = [m[name] for m in self.metrics if name in m]
        return max(values) if values else None

    def summary(self) -> Dict[str, Any]:
        """Scalar diagnostics without the nodal profiles."""
        return {
            'scenario': self.scenario,
            'dimensions': self.dims,
            'counts': list(self.counts),
            'extents': list(self.extents),
            'units': self.units,
            'output_times': self.output_times,
            'mass_series': self.mass_series,
            'initial_mass': self.initial_mass,
            'final_mass': self.final_mass,
            'net_inflow': self.net_inflow,
            'mass_balance_error': self.mass_balance_error,
            'steps': len(self.iterations),
            'total_iterations': self.total_iterations,
            'median_iterations': self.median_iterations,
            'max_iterations': max(self.iterations) if self.iterations else 0,
            'reference': self.reference,
            'metrics': self.metrics,
            'assembly': self.assembly,
        }

    def to_dict(self, include_profiles: bool = True) -> Dict[str, Any]:
        """Convert report to dictionary for serialization."""
        data = self.summary()
        data.update({
            'iterations': list(self.iterations),
            'step_times': list(self.step_times),
            'flux_bottom': list(self.flux_bottom),
            'flux_top': list(self.flux_top),
            'wall_clock': self.wall_clock,
        })
        if include_profiles:
            data['nodes'] = self.nodes.tolist()
            data['profiles'] = [p.to_dict() for p in self.profiles]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunReport':
        """Create report from dictionary data."""
        report = cls(
            data['scenario'], int(data['dimensions']), data.get('nodes', np.zeros((0, 3))),
            data['counts'], data['extents'], data.get('units'),
        )
        report.profiles = [ProfileSnapshot.from_dict(p) for p in data.get('profiles', [])]
        report.iterations = [int(i) for i in data.get('iterations', [])]
        report.step_times = [float(t) for t in data.get('step_times', [])]
        report.flux_bottom = [float(q) for q in data.get('flux_bottom', [])]
        report.flux_top = [float(q) for q in data.get('flux_top', [])]
        report.initial_mass = float(data.get('initial_mass', 0.0))
        report.final_mass = float(data.get('final_mass', 0.0))
        report.net_inflow = float(data.get('net_inflow', 0.0))
        report.wall_clock = float(data.get('wall_clock', 0.0))
        report.metrics = list(data.get('metrics', []))
        report.reference = data.get('reference')
        report.assembly = dict(data.get('assembly', {}))
        return report
