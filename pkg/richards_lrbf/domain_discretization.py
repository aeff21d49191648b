"""
Domain Discretization Module
Uniform collocation grids on boxes, boundary classification, k-d tree influence
domains and axis stencil neighbours

Nodes are numbered with z fastest, then x, then y:
``index = (iy * Nx + ix) * Nz + iz``.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ConfigurationError, DomainError, StencilUnavailableError

logger = logging.getLogger(__name__)

AXIS_NAMES = ('x', 'y', 'z')

# relative tolerance used to treat floating distances as ties
DISTANCE_TIE_RTOL = 1e-9


class BoundaryTag(IntEnum):
    """Node classification; a corner takes the highest-priority side."""
    INTERIOR = 0
    BOTTOM = 1
    TOP = 2
    LATERAL_X = 3
    LATERAL_Y = 4

    @property
    def is_dirichlet(self) -> bool:
        return self in (BoundaryTag.BOTTOM, BoundaryTag.TOP)

    @property
    def is_neumann(self) -> bool:
        return self in (BoundaryTag.LATERAL_X, BoundaryTag.LATERAL_Y)


def active_axes_for(dims: int) -> Tuple[int, ...]:
    """Axes carrying more than one node for a 1, 2 or 3 dimensional run."""
    if dims == 1:
        return (2,)
    if dims == 2:
        return (0, 2)
    if dims == 3:
        return (0, 1, 2)
    raise ConfigurationError(f"dimensionality must be 1, 2 or 3, got {dims}")


@dataclass(frozen=True)
class PointCloud:
    """Collocation nodes of a tensor-product uniform grid."""

    nodes: np.ndarray
    tags: np.ndarray
    counts: Tuple[int, int, int]
    extents: Tuple[float, float, float]
    spacing: Tuple[float, float, float]
    dims: int

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def active_axes(self) -> Tuple[int, ...]:
        return active_axes_for(self.dims)

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.tags == BoundaryTag.INTERIOR)

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.tags != BoundaryTag.INTERIOR)

    @property
    def interior_count(self) -> int:
        return int(np.count_nonzero(self.tags == BoundaryTag.INTERIOR))

    @property
    def boundary_count(self) -> int:
        return self.size - self.interior_count

    def grid_index(self, i: int) -> Tuple[int, int, int]:
        """(ix, iy, iz) of node i."""
        nx, _, nz = self.counts
        iz = i % nz
        rest = i // nz
        return rest % nx, rest // nx, iz

    def node_index(self, ix, iy, iz):
        nx, _, nz = self.counts
        return (iy * nx + ix) * nz + iz

    def grid_indices(self) -> np.ndarray:
        """(N, 3) array of (ix, iy, iz) for every node."""
        nx, _, nz = self.counts
        idx = np.arange(self.size)
        iz = idx % nz
        rest = idx // nz
        return np.column_stack([rest % nx, rest // nx, iz])

    def as_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape nodal values to (Ny, Nx, Nz)."""
        nx, ny, nz = self.counts
        return np.asarray(values).reshape(ny, nx, nz)

    def z_levels(self) -> np.ndarray:
        return np.linspace(0.0, self.extents[2], self.counts[2])


def build_grid(extents: Sequence[float], counts: Sequence[int], dims: int) -> PointCloud:
    """
    Build a tensor-product uniform grid on [0,l1]x[0,l2]x[0,L].

    Args:
        extents: (l1, l2, L); entries of inactive axes are kept for bookkeeping.
        counts: (Nx, Ny, Nz); inactive axes are forced to one node.
        dims: 1 (z only), 2 (x, z) or 3 (x, y, z).

    Returns:
        PointCloud with boundary tags and per-axis spacing.
    """
    axes = active_axes_for(dims)
    extents = tuple(float(e) for e in extents)
    counts = [int(c) for c in counts]
    spacing = [0.0, 0.0, 0.0]
    coords = []
    for axis in range(3):
        if axis in axes:
            if counts[axis] < 2:
                raise ConfigurationError(f"axis {AXIS_NAMES[axis]} needs at least 2 nodes")
            if not extents[axis] > 0.0:
                raise ConfigurationError(f"axis {AXIS_NAMES[axis]} has a degenerate extent")
            spacing[axis] = extents[axis] / (counts[axis] - 1)
            coords.append(np.linspace(0.0, extents[axis], counts[axis]))
        else:
            counts[axis] = 1
            coords.append(np.zeros(1))

    yy, xx, zz = np.meshgrid(coords[1], coords[0], coords[2], indexing='ij')
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    iy, ix, iz = np.meshgrid(np.arange(counts[1]), np.arange(counts[0]), np.arange(counts[2]),
                             indexing='ij')
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    tags = np.full(len(nodes), BoundaryTag.INTERIOR, dtype=int)
    # lowest priority first so higher priorities overwrite at corners and edges
    if 1 in axes:
        tags[(iy == 0) | (iy == counts[1] - 1)] = BoundaryTag.LATERAL_Y
    if 0 in axes:
        tags[(ix == 0) | (ix == counts[0] - 1)] = BoundaryTag.LATERAL_X
    tags[iz == 0] = BoundaryTag.BOTTOM
    tags[iz == counts[2] - 1] = BoundaryTag.TOP

    cloud = PointCloud(
        nodes=nodes,
        tags=tags,
        counts=tuple(counts),
        extents=extents,
        spacing=tuple(spacing),
        dims=dims,
    )
    logger.debug("grid %s: %d nodes (%d interior)", cloud.counts, cloud.size, cloud.interior_count)
    return cloud


@dataclass(frozen=True)
class InfluenceDomain:
    """The n_s nearest nodes of a centre node, nearest first."""

    center: int
    members: np.ndarray
    distances: np.ndarray

    @property
    def size(self) -> int:
        return len(self.members)


def _order_candidates(distances: np.ndarray, indices: np.ndarray, scale: float) -> np.ndarray:
    """Row-wise ordering by distance, ties broken by ascending node index."""
    quantum = DISTANCE_TIE_RTOL * scale
    keys = np.round(distances / quantum)
    order = np.lexsort((indices, keys), axis=-1)
    return order


def nearest_members(points: np.ndarray, n_s: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The n_s nearest points of every point using a k-d tree.

    Returns:
        (members, distances), both of shape (N, n_s), nearest first, ties broken by index.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= n_s <= n:
        raise DomainError(f"n_s must lie in [1, {n}], got {n_s}")
    tree = cKDTree(points)
    scale = float(np.max(np.ptp(points, axis=0))) or 1.0

    k = min(n, n_s + max(4, n_s))
    while True:
        dist, idx = tree.query(points, k=k)
        dist = np.atleast_2d(dist).reshape(n, k)
        idx = np.atleast_2d(idx).reshape(n, k)
        if k == n:
            break
        # every point tied with the n_s-th one must be among the candidates
        cutoff = dist[:, n_s - 1] * (1.0 + DISTANCE_TIE_RTOL) + DISTANCE_TIE_RTOL * scale
        if np.all(dist[:, -1] > cutoff):
            break
        k = min(n, 2 * k)

    order = _order_candidates(dist, idx, scale)[:, :n_s]
    rows = np.arange(n)[:, None]
    return idx[rows, order], dist[rows, order]


def influence_domains(cloud: PointCloud, n_s: int) -> List[InfluenceDomain]:
    """One influence domain of n_s nearest nodes per node of the cloud."""
    members, distances = nearest_members(cloud.nodes, n_s)
    return [
        InfluenceDomain(center=i, members=members[i], distances=distances[i])
        for i in range(cloud.size)
    ]


def axis_neighbors(cloud: PointCloud, i: int, axis: int) -> Tuple[int, int]:
    """Indices (iL, iR) of the nodes adjacent to node i along an axis."""
    if axis not in cloud.active_axes:
        raise StencilUnavailableError(i, axis)
    grid = list(cloud.grid_index(i))
    if grid[axis] == 0 or grid[axis] == cloud.counts[axis] - 1:
        raise StencilUnavailableError(i, axis)
    left, right = list(grid), list(grid)
    left[axis] -= 1
    right[axis] += 1
    return cloud.node_index(*left), cloud.node_index(*right)


def axis_stencils(cloud: PointCloud, indices: np.ndarray) -> np.ndarray:
    """
    Vectorised stencils for nodes that are interior along every active axis.

    Returns:
        Array (n, 1 + 2*len(active_axes)) laid out as [i, iL_0, iR_0, iL_1, iR_1, ...].
    """
    indices = np.asarray(indices, dtype=int)
    grid = cloud.grid_indices()[indices]
    columns = [indices]
    for axis in cloud.active_axes:
        pos = grid[:, axis]
        if np.any(pos == 0) or np.any(pos == cloud.counts[axis] - 1):
            bad = int(indices[np.flatnonzero((pos == 0) | (pos == cloud.counts[axis] - 1))[0]])
            raise StencilUnavailableError(bad, axis)
        step = _axis_stride(cloud, axis)
        columns.extend([indices - step, indices + step])
    return np.column_stack(columns)


def _axis_stride(cloud: PointCloud, axis: int) -> int:
    nx, _, nz = cloud.counts
    return {0: nz, 1: nx * nz, 2: 1}[axis]
