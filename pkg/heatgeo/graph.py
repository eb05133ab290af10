from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from sklearn.neighbors import NearestNeighbors

from .errors import DisconnectedGraphError, ParameterError
from .types import Bandwidth, FloatArray, IntArray, LaplacianKind

logger = getLogger(__name__)

# Lower bound for adaptive bandwidths, reached when a point has k duplicates.
BANDWIDTH_FLOOR = 1e-12

# Edge lengths are stored sparsely, so zero-length edges between duplicates are kept at
# the smallest positive float instead.
LENGTH_FLOOR = float(np.finfo(np.float64).tiny)

LAPLACIAN_KINDS = ("combinatorial", "symmetric_normalized", "random_walk")


@dataclass(frozen=True)
class PointCloud:
    # n x d ambient coordinates.
    data: FloatArray
    # Optional integer class ids and time ids, one per point.
    labels: Optional[IntArray] = None
    timepoints: Optional[IntArray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ParameterError(f"point cloud must be a matrix, got shape {data.shape}")
        if data.shape[0] < 2:
            raise ParameterError(f"point cloud needs at least 2 points, got {data.shape[0]}")
        if data.shape[1] < 1:
            raise ParameterError("point cloud needs at least 1 dimension")
        if not np.all(np.isfinite(data)):
            raise ParameterError("point cloud contains non-finite entries")
        object.__setattr__(self, "data", data)

        for name in ("labels", "timepoints"):
            values = getattr(self, name)
            if values is not None:
                values = np.asarray(values, dtype=np.int64).ravel()
                if values.shape[0] != data.shape[0]:
                    raise ParameterError(
                        f"{name} has {values.shape[0]} entries for {data.shape[0]} points"
                    )
                object.__setattr__(self, name, values)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Graph:
    # Symmetric adjacency W with zero diagonal.
    adjacency: sp.csr_matrix
    # Ambient Euclidean length of every kept edge, same sparsity as the adjacency.
    lengths: sp.csr_matrix
    # Number of connected components. Disconnected graphs are allowed but flagged.
    n_components: int = 1
    # Number of points whose adaptive bandwidth hit `BANDWIDTH_FLOOR`.
    floored_bandwidths: int = 0

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def connected(self) -> bool:
        return self.n_components == 1

    @property
    def degrees(self) -> FloatArray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


@dataclass(frozen=True)
class Laplacian:
    # Symmetric matrix: Q - W for the combinatorial kind, I - Q^-1/2 W Q^-1/2 for both
    # normalized kinds. The random walk operator is recovered by the similarity
    # transform Q^-1/2 L Q^1/2, see `dense()`.
    matrix: sp.csr_matrix
    kind: LaplacianKind
    degrees: FloatArray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    # Apply the random walk similarity transform to a matrix computed from the
    # symmetric normalized representation, i.e. Q^-1/2 A Q^1/2.
    def to_random_walk(self, matrix: FloatArray) -> FloatArray:
        root = np.sqrt(self.degrees)
        return matrix / root[:, None] * root[None, :]

    # The operator itself as a dense matrix.
    def dense(self) -> FloatArray:
        matrix = self.matrix.toarray()
        if self.kind == "random_walk":
            return self.to_random_walk(matrix)
        return matrix


def components(adjacency: sp.spmatrix) -> List[List[int]]:
    _, membership = connected_components(adjacency, directed=False)
    groups: List[List[int]] = [[] for _ in range(int(membership.max()) + 1)]
    for vertex, group in enumerate(membership):
        groups[group].append(vertex)
    return groups


def require_connected(adjacency: sp.spmatrix, what: str) -> None:
    groups = components(adjacency)
    if len(groups) > 1:
        raise DisconnectedGraphError(f"{what} requires a connected graph", groups)


def build_knn_graph(
    points: PointCloud,
    k: int,
    bandwidth: Bandwidth = "adaptive",
    n_jobs: Optional[int] = None,
) -> Graph:
    n = points.n
    if k < 1 or k >= n:
        raise ParameterError(f"k must be in [1, {n - 1}] for {n} points, got {k}")
    if bandwidth != "adaptive" and not float(bandwidth) > 0:
        raise ParameterError(f"bandwidth must be positive or 'adaptive', got {bandwidth}")

    # Without a query argument, each point is excluded from its own neighbor list even
    # when it has duplicates. Neighbor search is exact and row-independent, so the
    # result doesn't depend on `n_jobs`.
    neighbors = NearestNeighbors(n_neighbors=k, n_jobs=n_jobs).fit(points.data)
    distances, indices = neighbors.kneighbors()

    floored = 0
    if bandwidth == "adaptive":
        sigma = distances[:, -1].copy()
        floored = int(np.count_nonzero(sigma < BANDWIDTH_FLOOR))
        if floored:
            logger.warning(
                f"{floored} points have a zero k-th neighbor distance (duplicates), flooring their bandwidth at {BANDWIDTH_FLOOR}"
            )
        sigma = np.maximum(sigma, BANDWIDTH_FLOOR)
        scale = sigma[:, None] * sigma[indices]
    else:
        scale = np.full(indices.shape, float(bandwidth))

    rows = np.repeat(np.arange(n), k)
    weights = np.exp(-(distances**2) / scale).ravel()
    directed = sp.csr_matrix((weights, (rows, indices.ravel())), shape=(n, n))
    directed_lengths = sp.csr_matrix(
        (np.maximum(distances, LENGTH_FLOOR).ravel(), (rows, indices.ravel())),
        shape=(n, n),
    )

    # Keep every directed neighbor edge. The kernel value is symmetric in (i, j), so the
    # elementwise max just takes the union of the two edge sets.
    adjacency = directed.maximum(directed.T).tocsr()
    lengths = directed_lengths.maximum(directed_lengths.T).tocsr()
    adjacency.eliminate_zeros()

    n_components, _ = connected_components(adjacency, directed=False)
    if n_components > 1:
        logger.warning(f"k-NN graph with k={k} has {n_components} connected components")

    logger.debug(f"built {k}-NN graph on {n} points with {adjacency.nnz} entries")
    return Graph(
        adjacency=adjacency,
        lengths=lengths,
        n_components=int(n_components),
        floored_bandwidths=floored,
    )


def laplacian(W: sp.spmatrix, kind: LaplacianKind = "symmetric_normalized") -> Laplacian:
    if kind not in LAPLACIAN_KINDS:
        raise ParameterError(f"unknown Laplacian kind: {kind}")
    adjacency = sp.csr_matrix(W, dtype=np.float64)
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    isolated = np.flatnonzero(degrees <= 0)
    if isolated.size:
        raise ParameterError(
            f"vertex {int(isolated[0])} has zero degree ({isolated.size} isolated vertices in total)"
        )

    n = adjacency.shape[0]
    if kind == "combinatorial":
        matrix = sp.diags(degrees) - adjacency
    else:
        inv_root = sp.diags(1.0 / np.sqrt(degrees))
        matrix = sp.identity(n, format="csr") - inv_root @ adjacency @ inv_root
    matrix = sp.csr_matrix(matrix)
    # Rounding in the normalization can break exact symmetry.
    matrix = ((matrix + matrix.T) * 0.5).tocsr()
    return Laplacian(matrix=matrix, kind=kind, degrees=degrees)
