"""
Metrics Module
Error norms between water-content profiles and the total water mass diagnostics
"""

from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .domain_discretization import PointCloud
from .exceptions import DomainError


def _paired(theta: Sequence[float], theta_ref: Sequence[float]):
    theta = np.asarray(theta, dtype=float).ravel()
    theta_ref = np.asarray(theta_ref, dtype=float).ravel()
    if theta.shape != theta_ref.shape:
        raise DomainError(f"profiles differ in length: {theta.size} vs {theta_ref.size}")
    if theta.size == 0:
        raise DomainError("profiles are empty")
    return theta, theta_ref


def metric_rmse(theta: Sequence[float], theta_ref: Sequence[float]) -> float:
    """Root-mean-square difference over the nodes."""
    theta, theta_ref = _paired(theta, theta_ref)
    return float(np.sqrt(np.mean((theta - theta_ref) ** 2)))


def metric_l1(theta: Sequence[float], theta_ref: Sequence[float]) -> float:
    """
    Relative error sum((theta - theta_ref)^2) / sum(theta_ref^2).

    The name is historical: the quantity is a ratio of sums of squares.
    """
    theta, theta_ref = _paired(theta, theta_ref)
    denominator = float(np.sum(theta_ref ** 2))
    if denominator == 0.0:
        raise DomainError("reference profile is identically zero")
    return float(np.sum((theta - theta_ref) ** 2)) / denominator


def column_mass(theta: Sequence[float], z: Sequence[float]) -> float:
    """Trapezoidal integral of theta along z."""
    return float(trapezoid(np.asarray(theta, dtype=float), np.asarray(z, dtype=float)))


def total_mass(theta: np.ndarray, cloud: PointCloud) -> float:
    """
    Water stored per unit horizontal area: theta is averaged over every
    horizontal cross-section, then integrated along z.
    """
    grid = cloud.as_grid(theta)
    profile = grid.mean(axis=(0, 1))
    return column_mass(profile, cloud.z_levels())


def mass_series(profiles: Sequence[np.ndarray], cloud: PointCloud) -> np.ndarray:
    return np.array([total_mass(theta, cloud) for theta in profiles])


def mass_balance_error(initial_mass: float, final_mass: float, net_inflow: float) -> float:
    """|I(T) - I(0) - integral of (q_in - q_out)| relative to I(T)."""
    if final_mass == 0.0:
        raise DomainError("final water mass is zero")
    return abs(final_mass - initial_mass - net_inflow) / abs(final_mass)


def is_nondecreasing(series: Sequence[float], rtol: float = 1e-12) -> bool:
    values = np.asarray(series, dtype=float)
    if values.size < 2:
        return True
    slack = rtol * np.maximum(np.abs(values[:-1]), 1.0)
    return bool(np.all(np.diff(values) >= -slack))
