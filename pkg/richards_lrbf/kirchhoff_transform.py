"""
Kirchhoff Transform Module
Piecewise Kirchhoff transform of the Brooks-Corey Richards equation, its inverse,
and the coefficient functions E, F, G and chi of the transformed equation

The transformed variable is called ``u`` throughout; ``phi_cap`` is the storage
capacity theta_s - theta_r.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .soil_constitutive import (
    MaterialArrays,
    SoilField,
    relative_permeability,
    saturation,
    water_content,
)

logger = logging.getLogger(__name__)


def compute_h_bar(f: SoilField, counts: Optional[Tuple[int, int]] = None) -> float:
    """
    Reference head: the volume-weighted mean of h_d over the domain.

    Piecewise-constant fields are averaged exactly; curved interfaces use the
    midpoint rule on a grid with ``counts`` = (Nx, Nz) nodes.
    """
    h_bar = float(f.mean_air_entry(counts))
    if h_bar >= 0.0:
        raise ConfigurationError(f"reference head must be negative, got {h_bar}")
    return h_bar


def _check_h_bar(h_bar: float):
    if h_bar >= 0.0:
        raise DomainError(f"reference head must be negative, got {h_bar}")


def _positive_ratio(numerator: np.ndarray, h_bar: float) -> np.ndarray:
    ratio = numerator / h_bar
    if np.any(ratio <= 0.0):
        raise DomainError("power of a non-positive head ratio requested")
    return ratio


def _as_output(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def breakpoint_value(p, h_bar: float):
    """Transformed value u* at the air-entry head h_d."""
    lb = p.lam * p.beta
    return h_bar / (1.0 - lb) * (p.h_d / h_bar) ** (1.0 - lb)


def forward(h, p, h_bar: float):
    """Kirchhoff variable u(h) for parameters p and reference head h_bar."""
    _check_h_bar(h_bar)
    h = np.asarray(h, dtype=float)
    lb = p.lam * p.beta
    unsat = h <= p.h_d
    ratio_h = _positive_ratio(np.where(unsat, h, p.h_d), h_bar)
    ratio_d = _positive_ratio(np.asarray(p.h_d, dtype=float), h_bar)

    u_unsat = h_bar / (1.0 - lb) * ratio_h ** (1.0 - lb)
    u_sat = h_bar / (1.0 - lb) * ratio_d ** (1.0 - lb) + ratio_d ** (-lb) * (h - p.h_d)
    return _as_output(np.where(unsat, u_unsat, u_sat))


def inverse(u, p, h_bar: float):
    """Pressure head recovered from the Kirchhoff variable u."""
    _check_h_bar(h_bar)
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or not np.all(np.isfinite(u)):
        raise DomainError("Kirchhoff variable must be positive and finite")
    lb = p.lam * p.beta
    ratio_d = _positive_ratio(np.asarray(p.h_d, dtype=float), h_bar)
    u_star = h_bar / (1.0 - lb) * ratio_d ** (1.0 - lb)
    unsat = u <= u_star

    scaled = np.where(unsat, (1.0 - lb) / h_bar * u, 1.0)
    h_unsat = h_bar * scaled ** (1.0 / (1.0 - lb))
    h_sat = ratio_d ** lb * u + p.h_d - p.h_d / (1.0 - lb)
    return _as_output(np.where(unsat, h_unsat, h_sat))


def coeff_E(h, p, omega, phi_cap):
    """Storage coefficient E of the transformed equation (zero when saturated)."""
    h = np.asarray(h, dtype=float)
    h_bar = omega * p.h_d
    lb = p.lam * p.beta
    unsat = h <= p.h_d
    ratio = np.where(unsat, h / h_bar, 1.0)
    value = phi_cap * (-p.lam / h_bar) * omega ** (-p.lam) * ratio ** (lb - p.lam - 1.0)
    return _as_output(np.where(unsat, value, 0.0))


def coeff_F(h, p, h_bar: float):
    """Gravity coefficient F; chi * F * u equals Ks * kr on the unsaturated branch."""
    _check_h_bar(h_bar)
    h = np.asarray(h, dtype=float)
    lb = p.lam * p.beta
    unsat = h <= p.h_d
    ratio = np.where(unsat, h / h_bar, 1.0)
    value = (1.0 - lb) / h_bar / ratio
    return _as_output(np.where(unsat, value, 0.0))


def coeff_G(h, p):
    """Saturated gravity flux G: Ks above h_d, zero below."""
    h = np.asarray(h, dtype=float)
    return _as_output(np.where(h <= p.h_d, 0.0, p.k_s * np.ones_like(h)))


@dataclass(frozen=True)
class TransformContext:
    """Reference head with per-node omega and chi cached for one point cloud."""

    h_bar: float
    field: SoilField
    materials: MaterialArrays
    omega: np.ndarray
    chi: np.ndarray

    @classmethod
    def build(cls, field: SoilField, points: np.ndarray, h_bar: Optional[float] = None,
              counts: Optional[Tuple[int, int]] = None) -> 'TransformContext':
        """Resolve materials at ``points`` and cache omega = h_bar/h_d, chi = Ks omega^(-lambda beta)."""
        if h_bar is None:
            h_bar = compute_h_bar(field, counts)
        _check_h_bar(h_bar)
        materials = field.parameter_arrays(points)
        omega = h_bar / materials.h_d
        chi = materials.k_s * omega ** (-materials.lambda_beta)
        if np.any(omega <= 0.0) or np.any(chi <= 0.0):
            raise ConfigurationError("omega and chi must be positive at every node")
        logger.debug("transform context: h_bar=%g, chi in [%g, %g]", h_bar, chi.min(), chi.max())
        return cls(h_bar=float(h_bar), field=field, materials=materials, omega=omega, chi=chi)

    def forward(self, h: np.ndarray) -> np.ndarray:
        return forward(h, self.materials, self.h_bar)

    def inverse(self, u: np.ndarray) -> np.ndarray:
        return inverse(u, self.materials, self.h_bar)

    def coefficients(self, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Lagged (E, F, G) at the nodal heads h."""
        m = self.materials
        return (
            coeff_E(h, m, self.omega, m.phi_cap),
            coeff_F(h, m, self.h_bar),
            coeff_G(h, m),
        )

    def conductivity(self, h: np.ndarray) -> np.ndarray:
        """Hydraulic conductivity K = Ks kr(h); equals chi du/dh on both branches."""
        return self.materials.k_s * np.asarray(relative_permeability(h, self.materials), dtype=float)

    def water_content(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(water_content(saturation(h, self.materials), self.materials), dtype=float)


@dataclass(frozen=True)
class KirchhoffState:
    """Nodal Kirchhoff variable and pressure head at one time level."""

    u: np.ndarray
    h: np.ndarray
    time: float

    @classmethod
    def from_head(cls, context: TransformContext, h: np.ndarray, time: float = 0.0) -> 'KirchhoffState':
        h = np.asarray(h, dtype=float)
        return cls(u=context.forward(h), h=h, time=time)

    @classmethod
    def from_kirchhoff(cls, context: TransformContext, u: np.ndarray, time: float) -> 'KirchhoffState':
        u = np.asarray(u, dtype=float)
        return cls(u=u, h=context.inverse(u), time=time)

    def saturation(self, context: TransformContext) -> np.ndarray:
        return saturation(self.h, context.materials)

    def water_content(self, context: TransformContext) -> np.ndarray:
        return water_content(self.saturation(context), context.materials)
