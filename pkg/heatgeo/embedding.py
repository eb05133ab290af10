from __future__ import annotations

from dataclasses import dataclass
from logging import getLogger
from typing import NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.spatial.distance import pdist, squareform

from .distance import (
    DEFAULT_FLOOR,
    DistanceMatrix,
    HarnackParams,
    harnack_distances,
)
from .errors import ParameterError
from .heat import HeatKernel
from .types import FloatArray

logger = getLogger(__name__)

# Raw stress below which a configuration counts as an exact fit.
EXACT_FIT_STRESS = 1e-24


@dataclass(frozen=True)
class Embedding:
    coords: FloatArray
    # Square root of the weighted raw stress over unordered pairs.
    stress: float
    # Stress after initialization and after every Guttman step.
    trace: Tuple[float, ...]
    converged: bool
    # Set when the input carried no information, e.g. an all-zero distance matrix.
    degenerate: bool = False

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


class MdsConfig(NamedTuple):
    # Output dimension.
    k: int = 2
    max_iters: int = 300
    # Stop once the relative stress decrease of one iteration is below this.
    rel_tol: float = 1e-6
    # Symmetric nonnegative pair weights, or None for uniform weights.
    weights: Optional[FloatArray] = None
    # Only used to separate coincident starting points.
    seed: int = 0


def _pair_weights(weights: Optional[FloatArray], n: int) -> FloatArray:
    if weights is None:
        result = np.ones((n, n))
    else:
        result = np.array(weights, dtype=np.float64)
        if result.shape != (n, n):
            raise ParameterError(f"weights have shape {result.shape}, expected {(n, n)}")
        if np.any(result < 0) or not np.all(np.isfinite(result)):
            raise ParameterError("weights must be finite and nonnegative")
        if np.abs(result - result.T).max() > 1e-8:
            raise ParameterError("weights must be symmetric")
    np.fill_diagonal(result, 0.0)
    empty = np.flatnonzero(result.sum(axis=1) <= 0)
    if empty.size:
        raise ParameterError(f"weights of point {int(empty[0])} sum to zero")
    return result


def _raw_stress(D: FloatArray, coords: FloatArray, weights: FloatArray) -> float:
    residual = D - squareform(pdist(coords))
    upper = np.triu_indices(D.shape[0], 1)
    return float(np.sum(weights[upper] * residual[upper] ** 2))


# Weighted stress sqrt(sum_{i<j} w_ij (d_ij - ||y_i - y_j||)^2).
def stress(
    D: DistanceMatrix, coords: FloatArray, weights: Optional[FloatArray] = None
) -> float:
    return float(np.sqrt(_raw_stress(D.matrix, coords, _pair_weights(weights, D.n))))


# Flip each axis so that its largest-magnitude entry is positive.
def _orient(coords: FloatArray) -> FloatArray:
    coords = coords.copy()
    for axis in range(coords.shape[1]):
        pivot = int(np.argmax(np.abs(coords[:, axis])))
        if coords[pivot, axis] < 0:
            coords[:, axis] *= -1
    return coords


def classic_mds(D: DistanceMatrix, k: int = 2) -> Embedding:
    n = D.n
    if k < 1 or n < k + 1:
        raise ParameterError(f"classic MDS into {k} dimensions needs at least {k + 1} points, got {n}")
    if not np.any(D.matrix):
        logger.warning("all-zero distance matrix, returning a zero embedding")
        return Embedding(
            coords=np.zeros((n, k)), stress=0.0, trace=(0.0,), converged=True, degenerate=True
        )

    # B = -1/2 J (D o D) J
    squared = D.matrix**2
    centered = squared - squared.mean(axis=0)[None, :]
    centered = centered - centered.mean(axis=1)[:, None]
    gram = -0.5 * centered
    gram = (gram + gram.T) * 0.5

    eigenvalues, eigenvectors = scipy.linalg.eigh(gram, subset_by_index=[n - k, n - 1])
    eigenvalues = np.clip(eigenvalues[::-1], 0.0, None)
    eigenvectors = eigenvectors[:, ::-1]
    coords = _orient(eigenvectors * np.sqrt(eigenvalues)[None, :])

    value = stress(D, coords)
    return Embedding(coords=coords, stress=value, trace=(value,), converged=True)


# Jitter points that coincide in the starting layout but not in D; the Guttman
# transform cannot pull exactly coincident points apart when all weights are equal.
def _separate_ties(D: FloatArray, coords: FloatArray, seed: int) -> FloatArray:
    fitted = squareform(pdist(coords))
    tied = (fitted == 0) & (D > 0)
    if not np.any(tied):
        return coords
    rows = np.flatnonzero(tied.any(axis=1))
    scale = float(D.max()) * 1e-6
    rng = np.random.Generator(np.random.Philox(seed))
    coords = coords.copy()
    coords[rows] += rng.normal(0.0, scale, size=(rows.size, coords.shape[1]))
    logger.debug(f"separated {rows.size} coincident starting points")
    return coords


def smacof(
    D: DistanceMatrix, cfg: MdsConfig = MdsConfig(), init: Optional[FloatArray] = None
) -> Embedding:
    n = D.n
    if cfg.max_iters < 1 or not cfg.rel_tol > 0:
        raise ParameterError("max_iters must be positive and rel_tol must be positive")
    weights = _pair_weights(cfg.weights, n)
    uniform = cfg.weights is None

    if init is None:
        start = classic_mds(D, cfg.k)
        if start.degenerate:
            return start
        coords = start.coords
    else:
        coords = np.array(init, dtype=np.float64)
        if coords.shape != (n, cfg.k):
            raise ParameterError(f"initial layout has shape {coords.shape}, expected {(n, cfg.k)}")
    coords = _separate_ties(D.matrix, coords, cfg.seed)

    # Uniform weights give V = n J, whose pseudo-inverse just scales by 1/n.
    v_pinv = None
    if not uniform:
        v = np.diag(weights.sum(axis=1)) - weights
        v_pinv = scipy.linalg.pinvh(v)

    target = D.matrix * weights
    current = _raw_stress(D.matrix, coords, weights)
    trace = [float(np.sqrt(current))]
    converged = False
    for iteration in range(cfg.max_iters):
        if current <= EXACT_FIT_STRESS:
            converged = True
            break

        fitted = squareform(pdist(coords))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(fitted > 0, target / fitted, 0.0)
        b = -ratio
        np.fill_diagonal(b, 0.0)
        np.fill_diagonal(b, -b.sum(axis=1))
        coords = b @ coords / n if v_pinv is None else v_pinv @ (b @ coords)

        updated = _raw_stress(D.matrix, coords, weights)
        trace.append(float(np.sqrt(updated)))
        decrease = (current - updated) / current
        current = updated
        logger.debug(f"SMACOF iteration {iteration + 1}: stress {trace[-1]:.6g}")
        if decrease < cfg.rel_tol:
            converged = True
            break

    if not converged:
        logger.info(f"SMACOF stopped after {cfg.max_iters} iterations without converging")
    return Embedding(
        coords=coords,
        stress=float(np.sqrt(current)),
        trace=tuple(trace),
        converged=converged,
    )


# Diffusion-maps coordinates: the first k non-trivial right eigenvectors of P = Q^-1 W,
# scaled by their eigenvalues to the power t.
def diffusion_map_embedding(W: sp.spmatrix, t: int, k: int = 2) -> FloatArray:
    adjacency = sp.csr_matrix(W, dtype=np.float64)
    n = adjacency.shape[0]
    if k < 1 or k > n - 1:
        raise ParameterError(f"diffusion map embedding into {k} dimensions needs more than {k} points")
    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    if np.any(degrees <= 0):
        raise ParameterError(f"vertex {int(np.flatnonzero(degrees <= 0)[0])} has zero degree")
    inv_root = 1.0 / np.sqrt(degrees)
    # Symmetric conjugate of P, with the same eigenvalues.
    conjugate = adjacency.toarray() * inv_root[:, None] * inv_root[None, :]
    conjugate = (conjugate + conjugate.T) * 0.5
    eigenvalues, eigenvectors = scipy.linalg.eigh(conjugate, subset_by_index=[n - k - 1, n - 1])
    eigenvalues = eigenvalues[::-1][1:]
    right = (eigenvectors[:, ::-1] * inv_root[:, None])[:, 1:]
    return _orient(right * np.power(eigenvalues, t)[None, :])


# SMACOF weights from a diffusion matrix: its symmetric part, floored so that the weight
# graph stays connected even when the kernel is block diagonal.
def kernel_weights(kernel: FloatArray, floor: float = DEFAULT_FLOOR) -> FloatArray:
    matrix = np.asarray(kernel, dtype=np.float64)
    return np.maximum((matrix + matrix.T) * 0.5, floor)


def heatgeo_distances(
    kernel: HeatKernel,
    sigma: float = 1.0,
    rho: float = 0.0,
    floor: float = DEFAULT_FLOOR,
    squared: bool = False,
) -> DistanceMatrix:
    params = HarnackParams(sigma=sigma, rho=rho, floor=floor, squared=squared)
    return harnack_distances(kernel.matrix, kernel.time, params)
