"""Voxel adjacency graphs and the spatial roughness operator.

The roughness penalty sums ``1/2 ||f_n - f_m||^2`` over every voxel ``n`` and
every neighbour ``m`` of ``n``, so each unordered pair is counted twice.  With
``D`` stacking one finite-difference row per *ordered* pair this is
``1/2 ||D f||^2`` and ``D^T D = 2 L``, where ``L`` is the combinatorial graph
Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = ["SpatialGraph", "build_spatial_graph", "apply_dtd", "operator_norm_dtd",
           "compute_xi_p", "XI_EPSILON"]

XI_EPSILON = 1e-10


@dataclass(frozen=True, eq=False)
class SpatialGraph:
    """Face-adjacency graph over the voxels of a mask.

    Attributes
    ----------
    n_voxels : int
    edges : (E, 2) int array
        Unordered adjacent pairs with ``edges[:, 0] < edges[:, 1]``.
    degrees : (N,) int array
    voxel_coords : (N, ndim) int array or None
        Lattice coordinates of each voxel, for reshaping maps to images.
    image_shape : tuple or None
    """

    n_voxels: int
    edges: np.ndarray
    degrees: np.ndarray = None
    voxel_coords: np.ndarray | None = None
    image_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        n = int(self.n_voxels)
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if n < 1:
            raise ValueError("a spatial graph needs at least one voxel")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge index out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-edges are not allowed")
            edges = np.sort(edges, axis=1)
            if np.unique(edges, axis=0).shape[0] != edges.shape[0]:
                raise ValueError("duplicate edges")
        degrees = np.bincount(edges.ravel(), minlength=n)
        if self.degrees is not None and not np.array_equal(self.degrees, degrees):
            raise ValueError("degrees do not match the edge list")
        for name, value in (("edges", edges), ("degrees", degrees)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "n_voxels", n)
        if self.voxel_coords is not None:
            coords = np.array(self.voxel_coords, dtype=np.int64)
            coords.setflags(write=False)
            object.__setattr__(self, "voxel_coords", coords)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max(initial=0))

    @cached_property
    def dtd_matrix(self) -> sp.csr_matrix:
        """Sparse ``N x N`` matrix ``2 L``."""
        n = self.n_voxels
        i, j = self.edges[:, 0], self.edges[:, 1]
        adj = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
        adj = adj + adj.T
        lap = sp.diags(self.degrees.astype(float)) - adj
        return (2.0 * lap).tocsr()

    def to_image(self, values, fill: float = 0.0) -> np.ndarray:
        """Scatter a length-N voxel vector back onto the lattice."""
        if self.voxel_coords is None or self.image_shape is None:
            raise ValueError("graph carries no lattice coordinates")
        out = np.full(self.image_shape, fill, dtype=float)
        out[tuple(self.voxel_coords.T)] = values
        return out

    def subgraph(self, voxels) -> tuple["SpatialGraph", np.ndarray]:
        """Induced subgraph on ``voxels``; also returns the kept voxel indices."""
        voxels = np.unique(np.asarray(voxels, dtype=np.int64))
        relabel = np.full(self.n_voxels, -1)
        relabel[voxels] = np.arange(voxels.size)
        keep = (relabel[self.edges[:, 0]] >= 0) & (relabel[self.edges[:, 1]] >= 0)
        coords = None if self.voxel_coords is None else self.voxel_coords[voxels]
        return SpatialGraph(voxels.size, relabel[self.edges[keep]], voxel_coords=coords,
                            image_shape=self.image_shape), voxels


def build_spatial_graph(mask, connectivity: str = "faces") -> SpatialGraph:
    """One node per true voxel of a 2-D or 3-D mask, face-adjacent pairs as edges.

    Voxels are numbered in C order over the mask.  Neighbours outside the mask
    are simply absent, so no smoothing is applied across the mask boundary.
    """
    if connectivity != "faces":
        raise ValueError(f"unsupported connectivity {connectivity!r}")
    mask = np.asarray(mask).astype(bool)
    if mask.ndim not in (1, 2, 3):
        raise ValueError("mask must be 1-, 2- or 3-dimensional")
    if not mask.any():
        raise ValueError("mask is empty")
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    edges = []
    for axis in range(mask.ndim):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a, b = index[tuple(lo)], index[tuple(hi)]
        both = (a >= 0) & (b >= 0)
        edges.append(np.stack([a[both], b[both]], axis=1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return SpatialGraph(int(mask.sum()), edges[order], voxel_coords=np.argwhere(mask),
                        image_shape=mask.shape)


def apply_dtd(graph: SpatialGraph, image) -> np.ndarray:
    """Apply ``D^T D = 2 L`` along the voxel axis of a ``Q x N`` image."""
    image = np.asarray(image, dtype=float)
    squeeze = image.ndim == 1
    image = np.atleast_2d(image)
    if image.shape[1] != graph.n_voxels:
        raise ValueError(f"image has {image.shape[1]} voxel columns, graph has {graph.n_voxels}")
    out = (graph.dtd_matrix @ image.T).T
    return out[0] if squeeze else out


def operator_norm_dtd(graph: SpatialGraph, tol: float = 1e-6, max_iter: int = 1000) -> float:
    """Estimate the spectral norm of ``D^T D`` by power iteration.

    The iteration starts from all-ones plus one on the first voxel of every
    connected component (voxel 0 for a connected graph) and stops once the
    eigen-residual ``||A x - rho x||`` falls below ``tol * rho``; the returned
    value is then ``rho + residual``, an upper estimate for the top eigenvalue.
    If the residual test is not met within ``max_iter`` steps the Gershgorin
    bound ``4 * max_degree`` is returned instead.  The result never exceeds
    that bound.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if graph.n_edges == 0:
        return 0.0
    bound = 4.0 * graph.max_degree
    a = graph.dtd_matrix
    x = np.ones(graph.n_voxels)
    _, labels = connected_components(a, directed=False)
    x[np.unique(labels, return_index=True)[1]] += 1.0
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = a @ x
        rho = float(x @ y)
        resid = float(np.linalg.norm(y - rho * x))
        if rho > 0 and resid <= tol * rho:
            return min(rho + resid, bound)
        norm = np.linalg.norm(y)
        if norm == 0:
            break
        x = y / norm
    return bound


def compute_xi_p(lam: float, norm_dtd: float) -> float:
    """Proximal step parameter ``0.75 * lam * ||D^T D|| + 1e-10``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if norm_dtd < 0:
        raise ValueError("operator norm must be nonnegative")
    return 0.75 * lam * norm_dtd + XI_EPSILON
