from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist, squareform
from scipy.stats import poisson

from .errors import ParameterError
from .graph import require_connected
from .heat import HeatKernel
from .types import DiffusionWeighting, FloatArray

logger = getLogger(__name__)

# Floor applied to kernel entries before any log.
DEFAULT_FLOOR = 1e-12

# Below the floor, logs are compressed by this factor instead of cut off, so positive
# entries under the floor keep their order.
FLOOR_SLOPE = 1e-3

# Provenance tags.
HEAT_GEODESIC = "heat_geodesic"
DIFFUSION_MAP = "diffusion_map"
PHATE_POTENTIAL = "phate_potential"
GROUND_TRUTH = "ground_truth"
TRIPLET = "triplet"
INTERPOLATED = "interpolated"
SHORTEST_PATH = "shortest_path"
RANDOM_WALK_GEODESIC = "random_walk_geodesic"


@dataclass(frozen=True)
class DistanceMatrix:
    matrix: FloatArray
    provenance: str
    # Parameters that produced the matrix, e.g. {"t": 1.0, "sigma": 1.0, "rho": 0.0}.
    params: Dict[str, Any] = field(default_factory=dict)
    # Kernel entries raised to the floor, and squared dissimilarities clamped at 0.
    floored: int = 0
    clamped: int = 0

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ParameterError(f"distance matrix must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ParameterError("distance matrix has non-finite entries")
        if np.any(matrix < 0):
            raise ParameterError("distance matrix has negative entries")
        asymmetry = float(np.abs(matrix - matrix.T).max()) if matrix.size else 0.0
        if asymmetry > 1e-8:
            raise ParameterError(f"distance matrix is not symmetric (max asymmetry {asymmetry:.3e})")
        np.fill_diagonal(matrix, 0.0)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class HarnackParams:
    # Strength of the volume correction.
    sigma: float = 1.0
    # Weight of the triplet distance in the final interpolation.
    rho: float = 0.0
    floor: float = DEFAULT_FLOOR
    # Skip the square root, i.e. use -4t log H directly.
    squared: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0 <= self.rho <= 1:
            raise ParameterError(f"rho must be in [0, 1], got {self.rho}")
        if not self.floor > 0:
            raise ParameterError(f"floor must be positive, got {self.floor}")


@dataclass(frozen=True)
class PoissonKernel:
    matrix: FloatArray
    time: float
    max_order: int
    # Poisson mass beyond `max_order`, i.e. the truncation error bound.
    tail_mass: float


def _symmetric(matrix: FloatArray) -> FloatArray:
    return (matrix + matrix.T) * 0.5


def _row_distances(rows: FloatArray) -> FloatArray:
    return squareform(pdist(rows, metric="euclidean"))


# Elementwise log with entries below `floor` mapped to
# log(floor) + FLOOR_SLOPE * (log(h) - log(floor)). Nonpositive entries count as the
# smallest normal float. Returns (logs, number of entries below the floor).
def floored_log(matrix: FloatArray, floor: float = DEFAULT_FLOOR) -> Tuple[FloatArray, int]:
    values = np.asarray(matrix, dtype=np.float64)
    below = values < floor
    logs = np.log(np.maximum(values, np.finfo(np.float64).tiny))
    log_floor = np.log(floor)
    logs[below] = log_floor + FLOOR_SLOPE * (logs[below] - log_floor)
    return logs, int(np.count_nonzero(below))


# The dissimilarity for any diffusion matrix at time t, with the diagonal left as
# computed. Returns (profile, floored entries, clamped off-diagonal squares).
def geodesic_profile(
    matrix: FloatArray, t: float, params: HarnackParams
) -> Tuple[FloatArray, int, int]:
    kernel = _symmetric(np.asarray(matrix, dtype=np.float64))
    logs, floored = floored_log(kernel, params.floor)

    squared = -4.0 * t * logs
    if params.sigma > 0:
        diagonal = np.maximum(np.diag(kernel), params.floor)
        volume = 2.0 / (diagonal[:, None] + diagonal[None, :])
        squared -= params.sigma * 4.0 * t * np.log(volume)

    negative = squared < 0
    clamped = int(np.count_nonzero(negative & ~np.eye(kernel.shape[0], dtype=bool)))
    squared[negative] = 0.0
    profile = squared if params.squared else np.sqrt(squared)
    return profile, floored, clamped


def heat_geodesic_profile(
    H: HeatKernel, params: HarnackParams
) -> Tuple[FloatArray, int, int]:
    return geodesic_profile(H.matrix, H.time, params)


# Full dissimilarity including the triplet interpolation. Triplet rows are taken from the
# profile before its diagonal is zeroed, so they keep -4t log h_ii and, with sigma = 0,
# rho = 1 and squared values, equal 4t times the PHATE potential distance. This differs
# from triplet_distance(heat_geodesic(H)), whose rows have a zero diagonal.
def harnack_distances(
    matrix: FloatArray,
    t: float,
    params: HarnackParams,
    provenance: str = HEAT_GEODESIC,
) -> DistanceMatrix:
    profile, floored, clamped = geodesic_profile(matrix, t, params)
    if floored or clamped:
        logger.info(f"{provenance} at t={t:g}: {floored} kernel entries floored, {clamped} squares clamped")
    distances = DistanceMatrix(
        matrix=profile,
        provenance=provenance,
        params={"t": t, "sigma": params.sigma, "rho": 0.0},
        floored=floored,
        clamped=clamped,
    )
    if params.rho > 0:
        distances = interpolate(distances, triplet_distance(profile), params.rho)
    return distances


# d_t(i, j) = [-4t log h_ij - sigma 4t log(2 / (h_ii + h_jj))]^(1/2), after flooring the
# kernel and clamping negative squares at 0.
def heat_geodesic(H: HeatKernel, params: Optional[HarnackParams] = None) -> DistanceMatrix:
    params = params or HarnackParams()
    profile, floored, clamped = heat_geodesic_profile(H, params)
    if floored or clamped:
        logger.info(f"heat-geodesic at t={H.time:g}: {floored} kernel entries floored, {clamped} squares clamped")
    return DistanceMatrix(
        matrix=profile,
        provenance=HEAT_GEODESIC,
        params={"t": H.time, "sigma": params.sigma, "rho": params.rho},
        floored=floored,
        clamped=clamped,
    )


def triplet_distance(D: Union[DistanceMatrix, FloatArray]) -> DistanceMatrix:
    rows = D.matrix if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)
    params = dict(D.params) if isinstance(D, DistanceMatrix) else {}
    return DistanceMatrix(matrix=_row_distances(rows), provenance=TRIPLET, params=params)


def interpolate(D: DistanceMatrix, DT: DistanceMatrix, rho: float) -> DistanceMatrix:
    if not 0 <= rho <= 1:
        raise ParameterError(f"rho must be in [0, 1], got {rho}")
    if D.matrix.shape != DT.matrix.shape:
        raise ParameterError(f"cannot interpolate {D.matrix.shape} with {DT.matrix.shape}")
    return DistanceMatrix(
        matrix=(1.0 - rho) * D.matrix + rho * DT.matrix,
        provenance=D.provenance if rho == 0 else INTERPOLATED,
        params={**D.params, "rho": rho},
        floored=D.floored,
        clamped=D.clamped,
    )


def transition_matrix(W: sp.spmatrix) -> sp.csr_matrix:
    adjacency = sp.csr_matrix(W, dtype=np.float64)
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    if np.any(degrees <= 0):
        raise ParameterError(f"vertex {int(np.flatnonzero(degrees <= 0)[0])} has zero degree")
    return sp.csr_matrix(sp.diags(1.0 / degrees) @ adjacency)


def stationary_distribution(W: sp.spmatrix) -> FloatArray:
    degrees = np.asarray(sp.csr_matrix(W).sum(axis=1)).ravel()
    return degrees / degrees.sum()


# P^t as a dense matrix.
def random_walk_kernel(W: sp.spmatrix, t: int) -> FloatArray:
    if int(t) != t or t < 0:
        raise ParameterError(f"random walk time must be a nonnegative integer, got {t}")
    P = transition_matrix(W)
    result = np.eye(P.shape[0])
    for _ in range(int(t)):
        result = np.asarray(P @ result)
    return result


# l2 distances between kernel rows, each column optionally divided by a weight.
def kernel_row_distance(
    matrix: FloatArray, weights: Optional[FloatArray] = None
) -> FloatArray:
    rows = np.asarray(matrix, dtype=np.float64)
    if weights is not None:
        rows = rows / weights[None, :]
    return _row_distances(rows)


def diffusion_map_distance(
    W: sp.spmatrix, t: int, weighting: DiffusionWeighting = "standard"
) -> DistanceMatrix:
    require_connected(W, "diffusion map distance")
    steps = random_walk_kernel(W, t)
    pi = stationary_distribution(W)
    if weighting == "standard":
        # sum_k (P^t_ik - P^t_jk)^2 / pi_k
        matrix = kernel_row_distance(steps, np.sqrt(pi))
    elif weighting == "literal":
        matrix = kernel_row_distance(steps, pi)
    else:
        raise ParameterError(f"unknown diffusion map weighting: {weighting}")
    return DistanceMatrix(
        matrix=matrix,
        provenance=DIFFUSION_MAP,
        params={"t": t, "weighting": weighting},
    )


# l2 distance between the elementwise logs of the rows of a heat kernel or random walk.
def phate_potential(
    matrix: Union[HeatKernel, FloatArray], t: Optional[float] = None, floor: float = DEFAULT_FLOOR
) -> DistanceMatrix:
    if isinstance(matrix, HeatKernel):
        t = matrix.time if t is None else t
        matrix = matrix.matrix
    potential, floored = floored_log(matrix, floor)
    return DistanceMatrix(
        matrix=_row_distances(potential),
        provenance=PHATE_POTENTIAL,
        params={"t": t},
        floored=floored,
    )


# Smallest order whose Poisson tail mass is below `tolerance`.
def poisson_order(t: float, tolerance: float = 1e-10) -> int:
    order = int(np.ceil(t + 12.0 * np.sqrt(t) + 20.0))
    while poisson.sf(order, t) >= tolerance:
        order += 1
    return order


# sum_{k <= Kmax} m_t(k) P^k with Poisson weights m_t(k) = t^k e^{-t} / k!. As Kmax grows
# this converges to exp(-t L_rw).
def poisson_multiscale_kernel(
    W: sp.spmatrix, t: float, max_order: Optional[int] = None
) -> PoissonKernel:
    if not t >= 0:
        raise ParameterError(f"time must be nonnegative, got {t}")
    require_connected(W, "Poisson multiscale kernel")
    max_order = poisson_order(t) if max_order is None else int(max_order)
    if max_order < 0:
        raise ParameterError(f"maximum order must be nonnegative, got {max_order}")

    P = transition_matrix(W)
    n = P.shape[0]
    weights = poisson.pmf(np.arange(max_order + 1), t)
    power = np.eye(n)
    result = weights[0] * power
    for k in range(1, max_order + 1):
        power = np.asarray(P @ power)
        result += weights[k] * power

    tail = float(poisson.sf(max_order, t))
    logger.debug(f"Poisson kernel at t={t:g} truncated at order {max_order}, tail mass {tail:.3e}")
    return PoissonKernel(matrix=result, time=float(t), max_order=max_order, tail_mass=tail)
