"""
Richards LRBF Package
Infiltration in heterogeneous unsaturated soils: Kirchhoff-transformed Richards
equation, Brooks-Corey laws and localized radial basis function collocation

This package provides the following components:

- soil_constitutive.py: Brooks-Corey laws, soil records and heterogeneous soil fields
- kirchhoff_transform.py: Piecewise Kirchhoff transform and its coefficients
- domain_discretization.py: Collocation grids, boundary tags and influence domains
- lrbf_operators.py: Gaussian kernel, local Gram systems and sparse assembly
- nonlinear_stepper.py: Backward-Euler Picard stepping and boundary fluxes
- reference_oracle.py: Independent 1D finite-difference solver and operator checks
- metrics.py: RMSE, L1 error, total water mass and mass balance
- scenario_loader.py: Soil tables and scenario files
- run_report.py / output_writer.py: Collected results and result files
- coordinator.py: Main coordinator that integrates all modules

Usage:
    from richards_lrbf import create_coordinator

    sim = create_coordinator()
    scenario = sim.load_scenario("clay_1d").with_overrides(grid_scale=0.25, dt=1e-3,
                                                            final_time=0.5)
    outcome = sim.verify(scenario)
    print(outcome['report'].metrics)
"""

from typing import Optional

from .coordinator import SimulationCoordinator
from .event_dispatcher import Event, EventDispatcher, EventType, SimulationEventManager
from .exceptions import (
    ConfigurationError,
    DomainError,
    IllConditionedError,
    InfiltrationError,
    LinearSolverError,
    NonConvergenceError,
    OutputError,
    ScenarioParseError,
    StencilUnavailableError,
)
from .metrics import mass_balance_error, metric_l1, metric_rmse, total_mass
from .output_writer import write_outputs
from .run_report import RunReport
from .scenario_loader import Scenario, ScenarioLoader, SoilTableLoader
from .settings import DEFAULT_CONFIG
from .soil_constitutive import SoilParams

# Version information
__version__ = "1.0.0"
__author__ = "Richards LRBF Team"

# Public API
__all__ = [
    # Main classes
    "SimulationCoordinator",
    "create_coordinator",

    # Component managers
    "ScenarioLoader",
    "SoilTableLoader",
    "SimulationEventManager",

    # Data structures
    "Scenario",
    "SoilParams",
    "RunReport",
    "Event",
    "EventType",
    "EventDispatcher",

    # Functions
    "metric_rmse",
    "metric_l1",
    "total_mass",
    "mass_balance_error",
    "write_outputs",

    # Errors
    "InfiltrationError",
    "ConfigurationError",
    "DomainError",
    "StencilUnavailableError",
    "IllConditionedError",
    "NonConvergenceError",
    "LinearSolverError",
    "ScenarioParseError",
    "OutputError",

    "DEFAULT_CONFIG",
]


def create_coordinator(config: Optional[dict] = None) -> SimulationCoordinator:
    """
    Factory function to create a configured SimulationCoordinator instance.

    Args:
        config: Optional configuration dictionary; missing keys take DEFAULT_CONFIG values

    Returns:
        Configured SimulationCoordinator instance
    """
    merged_config = DEFAULT_CONFIG.copy()
    if config:
        merged_config.update(config)

    return SimulationCoordinator(
        data_directory=merged_config['data_directory'],
        scenario_directory=merged_config['scenario_directory'],
        event_logging=merged_config['event_logging'],
        oracle_refinement=int(merged_config['oracle_refinement']),
        condition_limit=float(merged_config['condition_limit']),
    )


def get_version_info() -> dict:
    """Get version and component information."""
    return {
        'version': __version__,
        'author': __author__,
        'components': {
            'soil_constitutive': 'Brooks-Corey laws and soil fields',
            'kirchhoff_transform': 'Kirchhoff transform and coefficients',
            'domain_discretization': 'Grids and influence domains',
            'lrbf_operators': 'Local RBF collocation operators',
            'nonlinear_stepper': 'Picard time stepping',
            'reference_oracle': 'Finite-difference reference solver',
            'scenario_loader': 'Scenario and soil table files',
            'coordinator': 'Main system coordinator',
        },
    }
