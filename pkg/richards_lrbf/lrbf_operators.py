"""
LRBF Operators Module
Gaussian kernel, local Gram systems and the operator rows of the localized RBF
collocation scheme, with a vectorised assembler for the sparse global matrix

An interior row applies the discrete operator L^m to every kernel basis function of
the influence domain (basis values at the axis-stencil nodes pushed through the
half-node formulas) and maps the result through the inverse Gram matrix. Evaluating
the local interpolant at one of its own data sites returns the nodal value exactly,
so stencil nodes that belong to the influence domain contribute unit cardinal rows.
Stencil nodes the k-d tree leaves out (anisotropic grids) are added to the domain
rather than interpolated from collinear members.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .domain_discretization import (
    BoundaryTag,
    InfluenceDomain,
    PointCloud,
    axis_stencils,
    nearest_members,
)
from .exceptions import ConfigurationError, DomainError, IllConditionedError

logger = logging.getLogger(__name__)

ROW_KINDS = ('interior', 'dirichlet', 'neumann')
SHAPE_SCALINGS = ('absolute', 'spacing')

# offsets are compared on this fraction of the largest extent
SIGNATURE_QUANTUM = 1e-9


@dataclass(frozen=True)
class KernelConfig:
    """
    Gaussian kernel settings.

    ``shape`` is the parameter c of exp(-(c r)^2) when ``scaling`` is 'absolute';
    with 'spacing' it is a dimensionless value divided by the smallest active grid
    spacing.
    """

    shape: float = 0.6
    n_s: int = 3
    scaling: str = 'absolute'
    condition_limit: float = 1e14

    def __post_init__(self):
        if not self.shape > 0.0:
            raise ConfigurationError(f"kernel shape parameter must be positive, got {self.shape}")
        if self.n_s < 1:
            raise ConfigurationError(f"influence domain size must be at least 1, got {self.n_s}")
        if self.scaling not in SHAPE_SCALINGS:
            raise ConfigurationError(f"unknown shape scaling '{self.scaling}'")
        if not self.condition_limit > 1.0:
            raise ConfigurationError("condition limit must exceed 1")

    def effective_shape(self, spacing: Sequence[float]) -> float:
        if self.scaling == 'absolute':
            return float(self.shape)
        active = [s for s in spacing if s > 0.0]
        return float(self.shape / min(active))

    def to_dict(self) -> Dict:
        return {
            'shape': self.shape,
            'n_s': self.n_s,
            'scaling': self.scaling,
            'condition_limit': self.condition_limit,
        }


def kernel(r, c: float):
    """psi(r) = exp(-(c r)^2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise DomainError("kernel distance must be non-negative")
    value = np.exp(-(c * r) ** 2)
    return float(value) if value.ndim == 0 else value


def kernel_gradient(x: np.ndarray, centers: np.ndarray, c: float) -> np.ndarray:
    """Gradient with respect to x of psi(|x - x_k|) for every centre x_k, shape (k, 3)."""
    diff = np.asarray(x, dtype=float)[None, :] - np.asarray(centers, dtype=float)
    r2 = np.sum(diff ** 2, axis=1)
    return -2.0 * c ** 2 * diff * np.exp(-(c ** 2) * r2)[:, None]


def _kernel_matrix(a: np.ndarray, b: np.ndarray, c: float) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.exp(-(c ** 2) * np.sum(diff ** 2, axis=-1))


@dataclass(frozen=True)
class LocalSystem:
    """Gram matrix of one influence domain with its Cholesky factor."""

    gram: np.ndarray
    factor: Tuple[np.ndarray, bool]
    condition: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs)

    @property
    def size(self) -> int:
        return len(self.gram)


def local_gram(points: np.ndarray, c: float, node: int = -1,
               condition_limit: float = 1e14) -> LocalSystem:
    """
    Factorise the Gram matrix [psi(|x_i - x_j|)] of the member coordinates.

    Raises:
        IllConditionedError: the factorisation fails or the 2-norm condition number
            exceeds ``condition_limit``.
    """
    points = np.asarray(points, dtype=float)
    gram = _kernel_matrix(points, points, c)
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > condition_limit:
        raise IllConditionedError(node, condition, c)
    try:
        factor = cho_factor(gram, lower=True)
    except LinAlgError:
        raise IllConditionedError(node, condition, c)
    return LocalSystem(gram=gram, factor=factor, condition=condition)


def gravity_source(g: np.ndarray, dz: float) -> np.ndarray:
    """(G_{i+1/2} - G_{i-1/2}) / dz with arithmetic half-node means."""
    g = np.asarray(g, dtype=float)
    return (g[..., 2] - g[..., 0]) / (2.0 * dz)


def half_node_operator(values: np.ndarray, chi: np.ndarray, delta: float) -> np.ndarray:
    """(chi_{i+1/2}(v_R - v_i) - chi_{i-1/2}(v_i - v_L)) / delta^2 over (iL, i, iR)."""
    v = np.asarray(values, dtype=float)
    chi = np.asarray(chi, dtype=float)
    chi_left = 0.5 * (chi[..., 0] + chi[..., 1])
    chi_right = 0.5 * (chi[..., 1] + chi[..., 2])
    return (chi_right * (v[..., 2] - v[..., 1]) - chi_left * (v[..., 1] - v[..., 0])) / delta ** 2


def advective_z_operator(u: np.ndarray, chi: np.ndarray, f: np.ndarray, dz: float) -> np.ndarray:
    """(chi F u)_{i+1/2} - (chi F u)_{i-1/2} over dz, each factor a half-node mean."""
    u, chi, f = (np.asarray(a, dtype=float) for a in (u, chi, f))

    def flux(lo, hi):
        return (0.5 * (chi[..., lo] + chi[..., hi]) * 0.5 * (f[..., lo] + f[..., hi])
                * 0.5 * (u[..., lo] + u[..., hi]))

    return (flux(1, 2) - flux(0, 1)) / dz


def half_node_flux(u: np.ndarray, chi: np.ndarray, f: np.ndarray, g: np.ndarray,
                   dz: float) -> np.ndarray:
    """
    Vertical flux chi du/dz + chi F u + G at the half node between the two entries
    on the last axis (lower, upper); every factor is an arithmetic half-node mean.
    This equals -q, the downward Darcy flux K (dh/dz + 1).
    """
    u, chi, f, g = (np.asarray(a, dtype=float) for a in (u, chi, f, g))

    def mean(a):
        return 0.5 * (a[..., 0] + a[..., 1])

    return mean(chi) * (u[..., 1] - u[..., 0]) / dz + mean(chi) * mean(f) * mean(u) + mean(g)


def stencil_coefficients(stencils: np.ndarray, axes: Sequence[int], spacing: Sequence[float],
                         chi: np.ndarray, e: np.ndarray, f: np.ndarray, dt: float,
                         coupled: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Coefficients of L^m = E/dt - sum_d L_d - L_4 on each stencil node.

    Args:
        stencils: (n, 1 + 2 len(axes)) as returned by ``axis_stencils``.
        chi, e, f: nodal arrays over the whole cloud.
        coupled: optional (n, 2 len(axes)) mask of stencil sides, ordered like the
            stencil columns after the centre, whose half-node flux is left out.

    Returns:
        (n, 1 + 2 len(axes)) coefficients aligned with ``stencils``.
    """
    centre = stencils[:, 0]
    coef = np.zeros(stencils.shape, dtype=float)
    coef[:, 0] = e[centre] / dt
    if coupled is None:
        open_sides = np.ones((len(stencils), stencils.shape[1] - 1))
    else:
        open_sides = 1.0 - np.asarray(coupled, dtype=float)
    for k, axis in enumerate(axes):
        left, right = stencils[:, 1 + 2 * k], stencils[:, 2 + 2 * k]
        open_left, open_right = open_sides[:, 2 * k], open_sides[:, 2 * k + 1]
        delta = spacing[axis]
        chi_left = 0.5 * (chi[centre] + chi[left])
        chi_right = 0.5 * (chi[centre] + chi[right])

        diffusion_left = open_left * chi_left / delta ** 2
        diffusion_right = open_right * chi_right / delta ** 2
        coef[:, 0] += diffusion_left + diffusion_right
        coef[:, 1 + 2 * k] -= diffusion_left
        coef[:, 2 + 2 * k] -= diffusion_right
        if axis == 2:
            # (chi F u) at a half node uses the mean of u, half on each side
            advection_left = open_left * chi_left * 0.5 * (f[centre] + f[left]) / (2.0 * delta)
            advection_right = open_right * chi_right * 0.5 * (f[centre] + f[right]) / (2.0 * delta)
            coef[:, 0] -= advection_right - advection_left
            coef[:, 1 + 2 * k] += advection_left
            coef[:, 2 + 2 * k] -= advection_right
    return coef


@dataclass(frozen=True)
class HeadLinearization:
    """
    Picard iterate (u^m, h^m) with the conductivity K(h^m).

    Across a material change u jumps while h stays continuous, so fluxes between
    nodes of different materials are written in head form with h linearised about
    this iterate: h(u) ~ h^m + (chi / K^m)(u - u^m).
    """

    u: np.ndarray
    h: np.ndarray
    conductivity: np.ndarray

    def slope(self, chi: np.ndarray) -> np.ndarray:
        """dh/du = chi / K at every node."""
        return chi / np.maximum(self.conductivity, np.finfo(float).tiny)

    def head(self, u: np.ndarray, chi: np.ndarray) -> np.ndarray:
        return self.h + self.slope(chi) * (np.asarray(u, dtype=float) - self.u)


@dataclass(frozen=True)
class OperatorRow:
    """One row of the global system restricted to its nonzero columns."""

    columns: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ROW_KINDS:
            raise ConfigurationError(f"unknown row kind '{self.kind}'")
        if len(self.columns) != len(self.weights):
            raise ConfigurationError("row columns and weights differ in length")
        if len(np.unique(self.columns)) != len(self.columns):
            raise ConfigurationError("row columns must be distinct")
        if not np.all(np.isfinite(self.weights)):
            raise ConfigurationError("row weights must be finite")

    def apply(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, np.asarray(values)[self.columns]))

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights))


def cardinal_matrix(stencil_points: np.ndarray, member_points: np.ndarray, c: float,
                    node: int = -1, condition_limit: float = 1e14,
                    quantum: float = 0.0) -> Tuple[np.ndarray, Optional[LocalSystem]]:
    """
    Interpolant evaluation matrix W with (W v)_q = interpolant of v at stencil point q.

    Stencil points that coincide with a member give an exact unit row; any other
    point needs the Gram factorisation, which is returned alongside W.
    """
    n_q, n_s = len(stencil_points), len(member_points)
    w = np.zeros((n_q, n_s))
    distances = np.linalg.norm(stencil_points[:, None, :] - member_points[None, :, :], axis=-1)
    tolerance = max(quantum, 1e-14 * float(np.max(distances, initial=1.0)))
    missing = []
    for q in range(n_q):
        hit = np.flatnonzero(distances[q] <= tolerance)
        if len(hit):
            w[q, hit[0]] = 1.0
        else:
            missing.append(q)
    system = None
    if missing:
        system = local_gram(member_points, c, node=node, condition_limit=condition_limit)
        psi = _kernel_matrix(stencil_points[missing], member_points, c)
        w[missing] = system.solve(psi.T).T
    return w, system


def neumann_weights(centre: np.ndarray, member_points: np.ndarray, normal: np.ndarray,
                    c: float, node: int = -1,
                    condition_limit: float = 1e14) -> Tuple[np.ndarray, LocalSystem]:
    """Weights of the normal derivative of the local interpolant at ``centre``."""
    system = local_gram(member_points, c, node=node, condition_limit=condition_limit)
    directional = kernel_gradient(centre, member_points, c) @ normal
    return system.solve(directional), system


def outward_normal(cloud: PointCloud, i: int) -> np.ndarray:
    """Unit outward normal of a lateral boundary node."""
    tag = BoundaryTag(int(cloud.tags[i]))
    if not tag.is_neumann:
        raise DomainError(f"node {i} is not on a lateral boundary")
    axis = 0 if tag == BoundaryTag.LATERAL_X else 1
    normal = np.zeros(3)
    normal[axis] = -1.0 if cloud.grid_index(i)[axis] == 0 else 1.0
    return normal


def interior_row(cloud: PointCloud, domain: InfluenceDomain, e: np.ndarray, f: np.ndarray,
                 chi: np.ndarray, dt: float, kernel_config: KernelConfig) -> OperatorRow:
    """Row Upsilon of one interior node for the lagged nodal coefficients E, F and chi."""
    s = domain.center
    stencil = axis_stencils(cloud, np.array([s]))
    coef = stencil_coefficients(stencil, cloud.active_axes, cloud.spacing, chi, e, f, dt)[0]
    c = kernel_config.effective_shape(cloud.spacing)
    members = np.asarray(domain.members)
    columns = np.concatenate([members, stencil[0][~np.isin(stencil[0], members)]])
    w, _ = cardinal_matrix(cloud.nodes[stencil[0]], cloud.nodes[columns], c, node=s,
                           condition_limit=kernel_config.condition_limit)
    return OperatorRow(columns=columns, weights=coef @ w, kind='interior')


def boundary_row(cloud: PointCloud, domain: InfluenceDomain, kind: str, chi_s: float,
                 kernel_config: KernelConfig) -> OperatorRow:
    """Row upsilon of one boundary node: unit Dirichlet row or -chi dpsi/dn mapped through the Gram inverse."""
    s = domain.center
    tag = BoundaryTag(int(cloud.tags[s]))
    if kind == 'dirichlet':
        if not tag.is_dirichlet:
            raise DomainError(f"node {s} is not a Dirichlet node")
        return OperatorRow(columns=np.array([s]), weights=np.array([1.0]), kind='dirichlet')
    if kind != 'neumann' or not tag.is_neumann:
        raise DomainError(f"node {s} cannot carry a '{kind}' row")
    c = kernel_config.effective_shape(cloud.spacing)
    weights, _ = neumann_weights(cloud.nodes[s], cloud.nodes[domain.members],
                                 outward_normal(cloud, s), c, node=s,
                                 condition_limit=kernel_config.condition_limit)
    return OperatorRow(columns=np.asarray(domain.members), weights=-chi_s * weights, kind='neumann')


def _signatures(cloud: PointCloud, centres: np.ndarray, members: np.ndarray,
                extra: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Group nodes whose members sit at identical relative offsets (optionally with extra keys)."""
    quantum = SIGNATURE_QUANTUM * max(cloud.extents)
    offsets = cloud.nodes[members] - cloud.nodes[centres][:, None, :]
    keys = np.round(offsets / quantum).astype(np.int64).reshape(len(centres), -1)
    if extra is not None:
        keys = np.column_stack([keys, extra.astype(np.int64)])
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    return unique, np.asarray(inverse).ravel()


@dataclass
class AssemblyStats:
    """Shape-cache bookkeeping reported after the static setup."""

    interior_signatures: int = 0
    neumann_signatures: int = 0
    gram_factorisations: int = 0
    max_condition: float = 0.0
    extended_domains: int = 0
    interface_sides: int = 0

    def record(self, system: Optional[LocalSystem]):
        if system is not None:
            self.gram_factorisations += 1
            self.max_condition = max(self.max_condition, system.condition)

    def to_dict(self) -> Dict:
        return {
            'interior_signatures': self.interior_signatures,
            'neumann_signatures': self.neumann_signatures,
            'gram_factorisations': self.gram_factorisations,
            'max_condition': self.max_condition,
            'extended_domains': self.extended_domains,
            'interface_sides': self.interface_sides,
        }


@dataclass
class OperatorAssembler:
    """
    Builds the sparse global matrix of the collocation scheme.

    Geometry-only work (influence domains, cardinal matrices, Neumann rows) is done
    once; each Picard sweep only recomputes the stencil coefficients. With a
    ``region`` array, stencil sides joining two materials are coupled in head form
    whenever a ``HeadLinearization`` is supplied.
    """

    cloud: PointCloud
    chi: np.ndarray
    kernel_config: KernelConfig
    stats: AssemblyStats = field(default_factory=AssemblyStats)
    region: Optional[np.ndarray] = None

    def __post_init__(self):
        cloud = self.cloud
        n_s = min(self.kernel_config.n_s, cloud.size)
        self.shape = self.kernel_config.effective_shape(cloud.spacing)
        self.members, _ = nearest_members(cloud.nodes, n_s)
        self.interior = cloud.interior_indices
        self.stencils = axis_stencils(cloud, self.interior)
        self._prepare_interior()
        self._prepare_interfaces()
        self._prepare_boundary()
        logger.info(
            "operator setup: %d interior signatures, %d Neumann signatures, "
            "%d Gram factorisations, max condition %.3e",
            self.stats.interior_signatures, self.stats.neumann_signatures,
            self.stats.gram_factorisations, self.stats.max_condition,
        )

    def _prepare_interior(self):
        cloud = self.cloud
        limit = self.kernel_config.condition_limit
        members = self.members[self.interior]
        stencils = self.stencils
        inside = (stencils[:, :, None] == members[:, None, :]).any(axis=-1).all(axis=-1)
        self.stats.extended_domains = int(np.count_nonzero(~inside))
        if self.stats.extended_domains:
            logger.warning(
                "%d influence domains miss axis-stencil nodes (anisotropic grid?); "
                "the stencil nodes were added as members", self.stats.extended_domains,
            )
            # duplicates map onto their first occurrence and get zero weight
            columns = np.concatenate([members, stencils], axis=1)
        else:
            columns = members
        self.columns = columns

        unique, inverse = _signatures(cloud, self.interior, columns)
        self.stats.interior_signatures = len(unique)
        quantum = SIGNATURE_QUANTUM * max(cloud.extents)

        n_stencil = stencils.shape[1]
        n_columns = columns.shape[1]
        # (group, stencil point, column) evaluation matrices shared per signature
        self._cardinal = np.zeros((len(unique), n_stencil, n_columns))
        for g in range(len(unique)):
            k = int(np.flatnonzero(inverse == g)[0])
            s = int(self.interior[k])
            w, system = cardinal_matrix(
                cloud.nodes[stencils[k]], cloud.nodes[columns[k]], self.shape,
                node=s, condition_limit=limit, quantum=quantum,
            )
            self._cardinal[g] = w
            self.stats.record(system)
        self._interior_group = inverse

        self._interior_rows = np.repeat(self.interior, n_columns)
        self._interior_cols = columns.ravel()

    def _prepare_interfaces(self):
        stencils = self.stencils
        if self.region is None:
            self._coupled = np.zeros((len(stencils), stencils.shape[1] - 1), dtype=bool)
        else:
            region = np.asarray(self.region)
            self._coupled = region[stencils[:, 1:]] != region[stencils[:, [0]]]
        self.stats.interface_sides = int(np.count_nonzero(self._coupled))

    def _prepare_boundary(self):
        cloud = self.cloud
        limit = self.kernel_config.condition_limit
        boundary = cloud.boundary_indices
        tags = cloud.tags[boundary]
        dirichlet = boundary[np.isin(tags, [BoundaryTag.BOTTOM, BoundaryTag.TOP])]
        neumann = boundary[np.isin(tags, [BoundaryTag.LATERAL_X, BoundaryTag.LATERAL_Y])]

        rows = [dirichlet]
        cols = [dirichlet]
        vals = [np.ones(len(dirichlet))]
        if len(neumann):
            normals = np.array([outward_normal(cloud, i) for i in neumann])
            members = self.members[neumann]
            unique, inverse = _signatures(cloud, neumann, members, extra=normals)
            self.stats.neumann_signatures = len(unique)
            geometric = np.zeros(members.shape)
            for g in range(len(unique)):
                group = np.flatnonzero(inverse == g)
                s = int(neumann[group[0]])
                weights, system = neumann_weights(
                    cloud.nodes[s], cloud.nodes[members[group[0]]], normals[group[0]],
                    self.shape, node=s, condition_limit=limit,
                )
                self.stats.record(system)
                geometric[group] = weights
            rows.append(np.repeat(neumann, members.shape[1]))
            cols.append(members.ravel())
            vals.append((-self.chi[neumann][:, None] * geometric).ravel())
        self.dirichlet = dirichlet
        self.neumann = neumann
        self._boundary_rows = np.concatenate(rows)
        self._boundary_cols = np.concatenate(cols)
        self._boundary_vals = np.concatenate(vals)

    def _coupled_for(self, lagged: Optional[HeadLinearization]) -> Optional[np.ndarray]:
        if lagged is None or not self.stats.interface_sides:
            return None
        return self._coupled

    def interface_terms(self, lagged: HeadLinearization,
                        g: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Stencil coefficients and right-hand side of the head-form fluxes on the
        coupled sides: K_{1/2} (h_n - h_c) / delta^2 with h linearised about
        ``lagged``, and on vertical sides the gravity flux K_{1/2} in place of G_{1/2}.
        """
        stencils = self.stencils
        coef = np.zeros(stencils.shape)
        rhs = np.zeros(len(stencils))
        rows, sides = np.nonzero(self._coupled)
        if not len(rows):
            return coef, rhs
        centre = stencils[rows, 0]
        neighbour = stencils[rows, 1 + sides]
        axes = np.asarray(self.cloud.active_axes)[sides // 2]
        delta = np.asarray(self.cloud.spacing, dtype=float)[axes]

        k = lagged.conductivity
        slope = lagged.slope(self.chi)
        offset = lagged.h - slope * lagged.u
        k_half = 0.5 * (k[centre] + k[neighbour])
        a = k_half / delta ** 2
        np.add.at(coef, (rows, np.zeros_like(rows)), a * slope[centre])
        np.add.at(coef, (rows, 1 + sides), -a * slope[neighbour])
        np.add.at(rhs, rows, a * (offset[neighbour] - offset[centre]))
        if g is not None:
            vertical = axes == 2
            upward = np.where(sides % 2 == 1, 1.0, -1.0)
            gravity = upward * (k_half - 0.5 * (g[centre] + g[neighbour])) / delta
            np.add.at(rhs, rows[vertical], gravity[vertical])
        return coef, rhs

    def interior_coefficients(self, e: np.ndarray, f: np.ndarray, dt: float,
                              lagged: Optional[HeadLinearization] = None) -> np.ndarray:
        """Stencil coefficients of every interior row, shape (Ni, 1 + 2 dims)."""
        coupled = self._coupled_for(lagged)
        coef = stencil_coefficients(self.stencils, self.cloud.active_axes, self.cloud.spacing,
                                    self.chi, e, f, dt, coupled=coupled)
        if coupled is not None:
            coef += self.interface_terms(lagged)[0]
        return coef

    def interior_weights(self, e: np.ndarray, f: np.ndarray, dt: float,
                         lagged: Optional[HeadLinearization] = None) -> np.ndarray:
        """Row weights over ``self.columns``, shape (Ni, n_columns)."""
        coef = self.interior_coefficients(e, f, dt, lagged)
        return np.einsum('nq,nqk->nk', coef, self._cardinal[self._interior_group])

    def assemble(self, e: np.ndarray, f: np.ndarray, dt: float,
                 lagged: Optional[HeadLinearization] = None) -> sparse.csr_matrix:
        """Global matrix for lagged E and F."""
        weights = self.interior_weights(e, f, dt, lagged)
        rows = np.concatenate([self._interior_rows, self._boundary_rows])
        cols = np.concatenate([self._interior_cols, self._boundary_cols])
        vals = np.concatenate([weights.ravel(), self._boundary_vals])
        n = self.cloud.size
        matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        matrix.eliminate_zeros()
        return matrix

    def interior_rhs(self, e: np.ndarray, g: np.ndarray, u_previous: np.ndarray,
                     dt: float, lagged: Optional[HeadLinearization] = None) -> np.ndarray:
        """f = (E/dt) u^p + gravity source at every interior node."""
        s = self.interior
        rhs = e[s] / dt * u_previous[s]
        k = self.cloud.active_axes.index(2)
        trio = self.stencils[:, [1 + 2 * k, 0, 2 + 2 * k]]
        rhs += gravity_source(g[trio], self.cloud.spacing[2])
        if self._coupled_for(lagged) is not None:
            rhs += self.interface_terms(lagged, g)[1]
        return rhs

    def vertical_flux(self, lower: np.ndarray, upper: np.ndarray, u: np.ndarray,
                      f: np.ndarray, g: np.ndarray,
                      lagged: Optional[HeadLinearization] = None) -> np.ndarray:
        """
        Upward Darcy flux q between vertically adjacent nodes ``lower`` and ``upper``,
        the same half-node flux the interior rows difference.
        """
        pair = np.column_stack([lower, upper])
        dz = self.cloud.spacing[2]
        flux = half_node_flux(u[pair], self.chi[pair], f[pair], g[pair], dz)
        if self._coupled_for(lagged) is not None:
            region = np.asarray(self.region)
            coupled = region[lower] != region[upper]
            k_half = 0.5 * (lagged.conductivity[lower] + lagged.conductivity[upper])
            head = lagged.head(u, self.chi)
            head_flux = k_half * ((head[upper] - head[lower]) / dz + 1.0)
            flux = np.where(coupled, head_flux, flux)
        return -flux
