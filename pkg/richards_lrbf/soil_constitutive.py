"""
Soil Constitutive Module
Brooks-Corey retention and permeability laws, soil records and heterogeneous soil fields

All relations accept either a single ``SoilParams`` record or a ``MaterialArrays`` bundle
of per-node parameters; evaluation is vectorised with numpy broadcasting.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class SoilParams:
    """Brooks-Corey parameter record for one material."""

    theta_r: float
    theta_s: float
    k_s: float
    h_d: float
    lam: float
    beta: float
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.theta_r < self.theta_s <= 1.0:
            raise ConfigurationError(
                f"{self.label}: need 0 <= theta_r < theta_s <= 1, got {self.theta_r}, {self.theta_s}"
            )
        if self.k_s <= 0.0:
            raise ConfigurationError(f"{self.label}: k_s must be positive, got {self.k_s}")
        if self.h_d >= 0.0:
            raise ConfigurationError(f"{self.label}: h_d must be negative, got {self.h_d}")
        if self.lam <= 0.0:
            raise ConfigurationError(f"{self.label}: lambda must be positive, got {self.lam}")
        if self.beta <= 1.0:
            raise ConfigurationError(f"{self.label}: beta must exceed 1, got {self.beta}")
        if self.lam * self.beta <= 1.0:
            raise ConfigurationError(
                f"{self.label}: the Kirchhoff transform needs lambda*beta > 1, "
                f"got {self.lam * self.beta:g}"
            )

    @property
    def label(self) -> str:
        return self.name or "soil"

    @property
    def lambda_beta(self) -> float:
        return self.lam * self.beta

    @property
    def phi_cap(self) -> float:
        """Storage capacity theta_s - theta_r."""
        return self.theta_s - self.theta_r

    def to_dict(self) -> Dict[str, Any]:
        """Convert the record to a dictionary for serialization."""
        return {
            'name': self.name,
            'theta_r': self.theta_r,
            'theta_s': self.theta_s,
            'k_s': self.k_s,
            'h_d': self.h_d,
            'lambda': self.lam,
            'beta': self.beta,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SoilParams':
        """Create a record from its dictionary form."""
        return cls(
            theta_r=float(data['theta_r']),
            theta_s=float(data['theta_s']),
            k_s=float(data['k_s']),
            h_d=float(data['h_d']),
            lam=float(data['lambda']),
            beta=float(data['beta']),
            name=data.get('name', ''),
        )


@dataclass(frozen=True)
class MaterialArrays:
    """Per-node parameter arrays resolved from a soil field."""

    theta_r: np.ndarray
    theta_s: np.ndarray
    k_s: np.ndarray
    h_d: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    region: np.ndarray

    @property
    def lambda_beta(self) -> np.ndarray:
        return self.lam * self.beta

    @property
    def phi_cap(self) -> np.ndarray:
        return self.theta_s - self.theta_r

    def __len__(self) -> int:
        return len(self.region)

    def take(self, index) -> 'MaterialArrays':
        """Restrict the arrays to a subset of nodes."""
        return MaterialArrays(
            theta_r=self.theta_r[index],
            theta_s=self.theta_s[index],
            k_s=self.k_s[index],
            h_d=self.h_d[index],
            lam=self.lam[index],
            beta=self.beta[index],
            region=self.region[index],
        )


# ----------------------------------------------------------------------
# Brooks-Corey relations
# ----------------------------------------------------------------------

def _unsaturated_ratio(h: np.ndarray, p) -> Tuple[np.ndarray, np.ndarray]:
    """Mask of the h <= h_d branch and the positive ratio h/h_d (1 elsewhere)."""
    h = np.asarray(h, dtype=float)
    unsat = h <= p.h_d
    ratio = np.where(unsat, h / p.h_d, 1.0)
    return unsat, ratio


def _as_output(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def saturation(h: ArrayLike, p) -> ArrayLike:
    """Effective saturation S(h) of the Brooks-Corey model."""
    unsat, ratio = _unsaturated_ratio(h, p)
    return _as_output(np.where(unsat, ratio ** (-p.lam), 1.0))


def relative_permeability(h: ArrayLike, p) -> ArrayLike:
    """Relative permeability kr(h) = S(h)^beta."""
    unsat, ratio = _unsaturated_ratio(h, p)
    return _as_output(np.where(unsat, ratio ** (-p.lam * p.beta), 1.0))


def water_content(S: ArrayLike, p) -> ArrayLike:
    """Volumetric water content from effective saturation."""
    s = np.asarray(S, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0) or not np.all(np.isfinite(s)):
        raise DomainError("saturation must lie in [0, 1]")
    return _as_output(p.theta_r + s * (p.theta_s - p.theta_r))


def invert_saturation(S: ArrayLike, p) -> ArrayLike:
    """Pressure head giving saturation S on the unsaturated branch."""
    s = np.asarray(S, dtype=float)
    if np.any(s <= 0.0):
        raise DomainError("saturation must be positive to invert the retention curve")
    if np.any(s > 1.0):
        raise DomainError("saturation cannot exceed 1")
    return _as_output(p.h_d * s ** (-1.0 / p.lam))


def saturation_from_water_content(theta: ArrayLike, p) -> ArrayLike:
    """Effective saturation for a water content in (theta_r, theta_s]."""
    t = np.asarray(theta, dtype=float)
    if np.any(t <= p.theta_r) or np.any(t > p.theta_s):
        raise DomainError("water content must lie in (theta_r, theta_s]")
    return _as_output((t - p.theta_r) / (p.theta_s - p.theta_r))


def beta_from_lambda(lam: float) -> float:
    """Permeability exponent beta = 3 + 2/lambda."""
    if lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return 3.0 + 2.0 / lam


def vg_to_bc(alpha: float, n: float, m: Optional[float] = None) -> Tuple[float, float]:
    """
    Convert van Genuchten parameters to Brooks-Corey (h_d, lambda).

    Args:
        alpha: Inverse capillary length [1/length].
        n: van Genuchten exponent, n > 1.
        m: van Genuchten exponent; defaults to 1 - 1/n.

    Returns:
        Tuple (h_d, lambda) with h_d negative.
    """
    if alpha <= 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if n <= 1.0:
        raise DomainError(f"n must exceed 1, got {n}")
    if m is None:
        m = 1.0 - 1.0 / n
    if not 0.0 < m < 1.0:
        raise DomainError(f"m must lie in (0, 1), got {m}")

    s_x = 0.72 - 0.35 * math.exp(-n ** 4)
    lam = (m / (1.0 - m)) * (1.0 - 0.5 ** (1.0 / m))
    magnitude = (1.0 / alpha) * s_x ** (1.0 / lam) * (s_x ** (-1.0 / m) - 1.0) ** (1.0 - m)
    return -magnitude, lam


# ----------------------------------------------------------------------
# Heterogeneous soil fields
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SoilField(ABC):
    """Spatial map from coordinates to soil parameters on the box [0,l1]x[0,l2]x[0,L]."""

    extents: Tuple[float, float, float]

    @property
    @abstractmethod
    def kind(self) -> str:
        """Geometry keyword used in scenario files."""

    @property
    @abstractmethod
    def materials(self) -> Tuple[SoilParams, ...]:
        """Materials indexed by region id."""

    @abstractmethod
    def region_of(self, points: np.ndarray) -> np.ndarray:
        """Region id of every point (rows are x, y, z)."""

    @abstractmethod
    def mean_air_entry(self, counts: Optional[Tuple[int, int]] = None) -> float:
        """Volume-weighted mean of h_d over the domain."""

    def _check_inside(self, points: np.ndarray):
        tol = 1e-12 * max(max(self.extents), 1.0)
        upper = np.asarray(self.extents, dtype=float)
        if np.any(points < -tol) or np.any(points > upper + tol):
            raise DomainError("point lies outside the domain extents")

    def lookup(self, point: Sequence[float]) -> SoilParams:
        """Parameters at a single point."""
        pts = np.atleast_2d(np.asarray(point, dtype=float))
        return self.materials[int(self.region_of(pts)[0])]

    def parameter_arrays(self, points: np.ndarray) -> MaterialArrays:
        """Per-node parameters for an array of points."""
        region = self.region_of(np.atleast_2d(points))
        table = np.array(
            [[p.theta_r, p.theta_s, p.k_s, p.h_d, p.lam, p.beta] for p in self.materials]
        )
        values = table[region]
        return MaterialArrays(
            theta_r=values[:, 0],
            theta_s=values[:, 1],
            k_s=values[:, 2],
            h_d=values[:, 3],
            lam=values[:, 4],
            beta=values[:, 5],
            region=region,
        )


@dataclass(frozen=True)
class HomogeneousField(SoilField):
    soil: SoilParams = None

    @property
    def kind(self) -> str:
        return 'homogeneous'

    @property
    def materials(self) -> Tuple[SoilParams, ...]:
        return (self.soil,)

    def region_of(self, points: np.ndarray) -> np.ndarray:
        self._check_inside(points)
        return np.zeros(len(points), dtype=int)

    def mean_air_entry(self, counts=None) -> float:
        return self.soil.h_d


@dataclass(frozen=True)
class LayeredField(SoilField):
    """Horizontal layers given as (z_bottom, z_top, soil), bottom to top."""

    layers: Tuple[Tuple[float, float, SoilParams], ...] = ()

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("a layered field needs at least one layer")
        depth = self.extents[2]
        tol = 1e-9 * max(depth, 1.0)
        if abs(self.layers[0][0]) > tol or abs(self.layers[-1][1] - depth) > tol:
            raise ConfigurationError(f"layers must span [0, {depth}]")
        for (lo, hi, _), (next_lo, _, _) in zip(self.layers, self.layers[1:]):
            if abs(hi - next_lo) > tol:
                raise ConfigurationError(f"layers leave a gap or overlap at z={hi}")
        for lo, hi, _ in self.layers:
            if hi <= lo:
                raise ConfigurationError(f"empty layer [{lo}, {hi}]")

    @property
    def kind(self) -> str:
        return 'layered_z'

    @property
    def materials(self) -> Tuple[SoilParams, ...]:
        return tuple(soil for _, _, soil in self.layers)

    def region_of(self, points: np.ndarray) -> np.ndarray:
        self._check_inside(points)
        tops = np.array([hi for _, hi, _ in self.layers[:-1]])
        # side='left' keeps an interface point in the lower layer
        return np.searchsorted(tops, points[:, 2], side='left')

    def mean_air_entry(self, counts=None) -> float:
        total = sum((hi - lo) * soil.h_d for lo, hi, soil in self.layers)
        return total / self.extents[2]


@dataclass(frozen=True)
class SplitXField(SoilField):
    """
    Vertical strips separated by x thresholds.

    When ``z_threshold`` is set the strips only apply for z <= z_threshold and
    ``upper`` fills the rest, which turns a two-strip split into an L-shaped region.
    """

    x_thresholds: Tuple[float, ...] = ()
    regions: Tuple[SoilParams, ...] = ()
    z_threshold: Optional[float] = None
    upper: Optional[SoilParams] = None

    def __post_init__(self):
        if len(self.regions) != len(self.x_thresholds) + 1:
            raise ConfigurationError("split_x needs one more region than thresholds")
        if list(self.x_thresholds) != sorted(self.x_thresholds):
            raise ConfigurationError("x thresholds must be increasing")
        if any(not 0.0 < t < self.extents[0] for t in self.x_thresholds):
            raise ConfigurationError("x thresholds must lie strictly inside (0, l1)")
        if self.z_threshold is not None:
            if self.upper is None:
                raise ConfigurationError("z_threshold requires an upper material")
            if not 0.0 < self.z_threshold < self.extents[2]:
                raise ConfigurationError("z_threshold must lie strictly inside (0, L)")

    @property
    def kind(self) -> str:
        return 'split_x'

    @property
    def materials(self) -> Tuple[SoilParams, ...]:
        if self.z_threshold is None:
            return tuple(self.regions)
        return tuple(self.regions) + (self.upper,)

    def region_of(self, points: np.ndarray) -> np.ndarray:
        self._check_inside(points)
        region = np.searchsorted(np.asarray(self.x_thresholds, dtype=float), points[:, 0], side='left')
        if self.z_threshold is not None:
            region = np.where(points[:, 2] > self.z_threshold, len(self.regions), region)
        return region

    def mean_air_entry(self, counts=None) -> float:
        l1, _, depth = self.extents
        edges = [0.0] + list(self.x_thresholds) + [l1]
        lower_fraction = 1.0 if self.z_threshold is None else self.z_threshold / depth
        total = 0.0
        for (lo, hi), soil in zip(zip(edges, edges[1:]), self.regions):
            total += (hi - lo) / l1 * lower_fraction * soil.h_d
        if self.z_threshold is not None:
            total += (1.0 - lower_fraction) * self.upper.h_d
        return total


@dataclass(frozen=True)
class CurvilinearField(SoilField):
    """Two materials separated by the curve xi(x) = l2 (0.1 (1 - cos(pi x / l1)) + 0.45)."""

    l1: float = 1.0
    l2: float = 1.0
    above: SoilParams = None
    below: SoilParams = None

    @property
    def kind(self) -> str:
        return 'curvilinear'

    @property
    def materials(self) -> Tuple[SoilParams, ...]:
        return (self.below, self.above)

    def interface(self, x: ArrayLike) -> ArrayLike:
        """Elevation of the material interface."""
        x = np.asarray(x, dtype=float)
        return _as_output(self.l2 * (0.1 * (1.0 - np.cos(np.pi * x / self.l1)) + 0.45))

    def region_of(self, points: np.ndarray) -> np.ndarray:
        self._check_inside(points)
        # on the curve itself the lower material wins
        return (points[:, 2] > self.interface(points[:, 0])).astype(int)

    def mean_air_entry(self, counts: Optional[Tuple[int, int]] = None) -> float:
        nx, nz = counts or (201, 201)
        l1, _, depth = self.extents
        xs = (np.arange(max(nx - 1, 1)) + 0.5) * l1 / max(nx - 1, 1)
        zs = (np.arange(max(nz - 1, 1)) + 0.5) * depth / max(nz - 1, 1)
        xx, zz = np.meshgrid(xs, zs, indexing='ij')
        pts = np.column_stack([xx.ravel(), np.zeros(xx.size), zz.ravel()])
        h_d = np.array([p.h_d for p in self.materials])[self.region_of(pts)]
        return float(h_d.mean())


def field_lookup(x: Sequence[float], f: SoilField) -> SoilParams:
    """Soil parameters at coordinates x = (x, y, z)."""
    return f.lookup(x)
