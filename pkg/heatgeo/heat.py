from __future__ import annotations

import warnings
from dataclasses import dataclass
from logging import getLogger
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from kneed import KneeLocator
from scipy.interpolate import UnivariateSpline
from scipy.sparse.linalg import splu
from scipy.special import entr, ive

from .errors import NumericalError, ParameterError
from .graph import Laplacian
from .types import Approximation, FloatArray, LaplacianKind

logger = getLogger(__name__)

# Largest graph for which dense kernels and eigendecompositions are attempted.
MAX_EXACT_SIZE = 5000

# Default order of the Chebyshev and Euler approximations.
DEFAULT_ORDER = 30

# Default candidate times for knee selection: (start, stop, count), log-spaced.
DEFAULT_TIME_GRID = (0.05, 200.0, 20)

POWER_ITERATIONS = 20

# Slack on the power-iteration estimate of the largest eigenvalue, which converges
# from below.
SPECTRAL_MARGIN = 1.05

# Tolerated relative residual of each backward Euler solve.
EULER_RESIDUAL_TOLERANCE = 1e-8

# Maximum number of kernels kept in memory at once while scanning a time grid.
KERNELS_PER_PASS = 8

# Exact kernels: largest t * c per series step, number of series terms, and the hop
# distance one step is trusted to resolve.
SERIES_STEP = 0.5
SERIES_TERMS = 30
SERIES_REACH = 20


@dataclass(frozen=True)
class HeatKernel:
    matrix: FloatArray
    time: float
    laplacian_kind: LaplacianKind
    method: Approximation
    # Polynomial order or number of Euler steps, None for the exact kernel.
    order: Optional[int] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    # Approximations can ring slightly below zero. These are floored downstream.
    @property
    def negative_entries(self) -> int:
        return int(np.count_nonzero(self.matrix < 0))

    def describe(self) -> str:
        suffix = "" if self.order is None else f"(K={self.order})"
        return f"{self.method}{suffix} {self.laplacian_kind} kernel at t={self.time:g}"


@dataclass(frozen=True)
class TimeSelection:
    grid: Tuple[float, ...]
    entropies: Tuple[float, ...]
    chosen: float
    # False when no knee passed the sensitivity threshold and the grid midpoint was
    # used instead.
    found_knee: bool
    index: int


def _check_time(t: float) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ParameterError(f"diffusion time must be a nonnegative finite number, got {t}")
    return t


def _check_order(K: int) -> int:
    if int(K) != K or K < 1:
        raise ParameterError(f"approximation order must be a positive integer, got {K}")
    return int(K)


def _identity_kernel(L: Laplacian, method: Approximation, order: Optional[int]) -> HeatKernel:
    return HeatKernel(
        matrix=np.eye(L.n),
        time=0.0,
        laplacian_kind=L.kind,
        method=method,
        order=order,
    )


# Kernels of the symmetric kinds are symmetrized to remove rounding asymmetry; random
# walk kernels are mapped through the similarity transform instead.
def _finish(L: Laplacian, matrix: FloatArray) -> FloatArray:
    if L.kind == "random_walk":
        return L.to_random_walk(matrix)
    return (matrix + matrix.T) * 0.5


def _dense_laplacian(L: Laplacian) -> FloatArray:
    if L.n > MAX_EXACT_SIZE:
        raise ParameterError(
            f"dense heat kernels are limited to n <= {MAX_EXACT_SIZE}, got {L.n}"
        )
    matrix = L.matrix.toarray()
    asymmetry = float(np.abs(matrix - matrix.T).max()) if L.n else 0.0
    if asymmetry > 1e-10:
        raise ParameterError(f"Laplacian is not symmetric (max asymmetry {asymmetry:.3e})")
    return matrix


def heat_spectrum(L: Laplacian) -> Tuple[FloatArray, FloatArray]:
    eigenvalues, eigenvectors = np.linalg.eigh(_dense_laplacian(L))
    return eigenvalues, eigenvectors


# e^{-tL} = e^{-tc} e^{tM} with M = cI - L entrywise nonnegative (c the largest diagonal
# entry). The series of e^{tM / 2^s} and the s squarings only add nonnegative numbers, so
# entries far below machine epsilon keep their relative accuracy.
def _uniformized_exponential(L: Laplacian, t: float) -> FloatArray:
    n = L.n
    shift = float(L.matrix.diagonal().max()) if n else 0.0
    M = (shift * sp.identity(n, format="csr") - L.matrix).tocsr()
    squarings = max(
        int(np.ceil(np.log2(max(t * shift / SERIES_STEP, 1.0)))),
        int(np.ceil(np.log2(max(n / SERIES_REACH, 1.0)))),
    )
    tau = t / 2.0**squarings

    term = np.eye(n)
    total = term.copy()
    for k in range(1, SERIES_TERMS + 1):
        term = (tau / k) * np.asarray(M @ term)
        total += term
    total *= np.exp(-tau * shift)
    for _ in range(squarings):
        total = total @ total
    return total


def exact_heat(L: Laplacian, t: float) -> HeatKernel:
    t = _check_time(t)
    _dense_laplacian(L)
    if t == 0:
        return _identity_kernel(L, "exact", None)
    return HeatKernel(
        matrix=_finish(L, _uniformized_exponential(L, t)),
        time=t,
        laplacian_kind=L.kind,
        method="exact",
    )


# Coordinates (e^{-t lambda_i} psi_i) of each vertex. Euclidean distances between them
# are the distances between rows of the exact heat kernel.
def heat_eigenmap(
    L: Laplacian,
    t: float,
    n_components: Optional[int] = None,
    skip_trivial: bool = True,
) -> FloatArray:
    if L.kind == "random_walk":
        raise ParameterError("eigenmaps need a symmetric Laplacian kind")
    t = _check_time(t)
    eigenvalues, eigenvectors = heat_spectrum(L)
    coordinates = eigenvectors * np.exp(-t * eigenvalues)[None, :]
    if skip_trivial:
        coordinates = coordinates[:, 1:]
    if n_components is not None:
        coordinates = coordinates[:, :n_components]
    return coordinates


def _largest_eigenvalue(matrix: sp.csr_matrix) -> float:
    # Fixed start vector, so repeated runs rescale identically.
    vector = np.random.default_rng(0).standard_normal(matrix.shape[0])
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(POWER_ITERATIONS):
        image = matrix @ vector
        norm = float(np.linalg.norm(image))
        if norm == 0:
            return 0.0
        vector = image / norm
        estimate = float(vector @ (matrix @ vector))
    logger.debug(f"power iteration estimate of the largest eigenvalue: {estimate:.6g}")
    return estimate


# Returns (L', scale) with L' = scale * L having its spectrum in [0, 2]. Kernels of L at
# time t are kernels of L' at time t / scale.
def _chebyshev_operator(L: Laplacian) -> Tuple[sp.csr_matrix, float]:
    if L.kind != "combinatorial":
        return L.matrix, 1.0

    estimate = _largest_eigenvalue(L.matrix)
    gershgorin = 2.0 * float(L.degrees.max())
    bound = min(SPECTRAL_MARGIN * estimate, gershgorin)
    if bound <= 0:
        raise NumericalError("chebyshev_heat", "could not estimate the spectral radius")
    scale = 2.0 / bound
    if estimate * scale > 2.0 + 1e-8:
        raise NumericalError(
            "chebyshev_heat",
            f"rescaled spectral radius {estimate * scale:.6g} exceeds 2",
        )
    return (L.matrix * scale).tocsr(), scale


# Coefficients of e^{-t(y + 1)} = sum_k c_k T_k(y) on [-1, 1], i.e. the Bessel expansion
# e^{-t} [I_0(t) + 2 sum_k (-1)^k I_k(t) T_k(y)]. `ive` includes the e^{-t} factor.
def chebyshev_coefficients(t: float, K: int) -> FloatArray:
    orders = np.arange(K + 1)
    coefficients = 2.0 * ive(orders, t) * np.where(orders % 2 == 0, 1.0, -1.0)
    coefficients[0] *= 0.5
    return coefficients


def chebyshev_heat(
    L: Laplacian, times: Sequence[float], K: int = DEFAULT_ORDER
) -> List[HeatKernel]:
    K = _check_order(K)
    times = [_check_time(t) for t in times]
    if not times:
        return []

    operator, scale = _chebyshev_operator(L)
    coefficients = [chebyshev_coefficients(t / scale, K) for t in times]

    # Shift the spectrum from [0, 2] to [-1, 1]. The polynomial terms T_k(L - I) are
    # computed once and reweighted for every requested time.
    n = L.n
    shifted = (operator - sp.identity(n, format="csr")).tocsr()
    previous = np.eye(n)
    current = shifted.toarray()
    results = [c[0] * previous + c[1] * current for c in coefficients]
    for k in range(2, K + 1):
        previous, current = current, 2.0 * (shifted @ current) - previous
        for result, c in zip(results, coefficients):
            result += c[k] * current

    kernels = []
    for t, result in zip(times, results):
        matrix = np.eye(n) if t == 0 else _finish(L, result)
        kernels.append(
            HeatKernel(
                matrix=matrix,
                time=t,
                laplacian_kind=L.kind,
                method="chebyshev",
                order=K,
            )
        )
    logger.debug(f"computed {len(kernels)} Chebyshev kernels of order {K} on {n} vertices")
    return kernels


def euler_heat(L: Laplacian, t: float, K: int = DEFAULT_ORDER) -> HeatKernel:
    t = _check_time(t)
    K = _check_order(K)
    if t == 0:
        return _identity_kernel(L, "euler", K)

    n = L.n
    system = (sp.identity(n, format="csr") + (t / K) * L.matrix).tocsc()
    # One factorization, reused for all K steps and all right-hand sides.
    factorization = splu(system, permc_spec="MMD_AT_PLUS_A")

    matrix = np.eye(n)
    for step in range(K):
        solution = factorization.solve(matrix)
        scale = max(float(np.linalg.norm(matrix)), 1.0)
        residual = float(np.linalg.norm(system @ solution - matrix)) / scale
        if not np.isfinite(residual) or residual > EULER_RESIDUAL_TOLERANCE:
            raise NumericalError(
                "euler_heat", f"backward Euler step {step + 1} did not converge", residual
            )
        matrix = solution

    return HeatKernel(
        matrix=_finish(L, matrix),
        time=t,
        laplacian_kind=L.kind,
        method="euler",
        order=K,
    )


def compute_heat(
    L: Laplacian, t: float, approximation: Approximation = "chebyshev", K: int = DEFAULT_ORDER
) -> HeatKernel:
    if approximation == "exact":
        return exact_heat(L, t)
    elif approximation == "euler":
        return euler_heat(L, t, K)
    elif approximation == "chebyshev":
        return chebyshev_heat(L, [t], K)[0]
    raise ParameterError(f"unknown heat kernel approximation: {approximation}")


# -sum_ij h_ij log h_ij, with 0 log 0 = 0. Negative approximation artifacts count as 0.
def heat_entropy(H: HeatKernel) -> float:
    return float(entr(np.clip(H.matrix, 0.0, None)).sum())


def log_time_grid(start: float, stop: float, count: int) -> Tuple[float, ...]:
    if not 0 < start < stop or count < 2:
        raise ParameterError(f"invalid time grid ({start}, {stop}, {count})")
    return tuple(float(t) for t in np.geomspace(start, stop, int(count)))


def heat_entropies(
    L: Laplacian, grid: Sequence[float], K: int = DEFAULT_ORDER
) -> List[float]:
    entropies: List[float] = []
    for offset in range(0, len(grid), KERNELS_PER_PASS):
        chunk = grid[offset : offset + KERNELS_PER_PASS]
        entropies.extend(heat_entropy(H) for H in chebyshev_heat(L, chunk, K))
    return entropies


# Kneedle for concave increasing curves, optionally smoothing y with a spline first.
# Returns the index of the first knee, or None.
def find_knee(
    x: Sequence[float],
    y: Sequence[float],
    sensitivity: float = 1.0,
    smoothing: float = 0.0,
) -> Optional[int]:
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 3:
        raise ParameterError("knee detection needs at least 3 matching (x, y) pairs")
    if np.any(np.diff(xs) <= 0):
        raise ParameterError("knee detection needs strictly increasing x values")

    if smoothing > 0:
        ys = UnivariateSpline(xs, ys, k=min(3, xs.size - 1), s=smoothing)(xs)
    if np.ptp(ys) <= 0:
        return None

    with warnings.catch_warnings():
        # kneed warns when there is no knee; None is reported instead.
        warnings.simplefilter("ignore", UserWarning)
        locator = KneeLocator(
            xs,
            ys,
            S=sensitivity,
            curve="concave",
            direction="increasing",
            interp_method="interp1d",
        )
    if locator.knee is None:
        return None
    return int(np.argmin(np.abs(xs - float(locator.knee))))


# The entropy curve ramps roughly linearly in log t before it saturates, so the knee
# is taken against log t.
def entropy_knee(
    grid: Sequence[float],
    entropies: Sequence[float],
    sensitivity: float = 1.0,
    smoothing: float = 0.0,
) -> Optional[int]:
    return find_knee(
        np.log(np.asarray(grid, dtype=np.float64)),
        entropies,
        sensitivity=sensitivity,
        smoothing=smoothing,
    )


def select_time_knee(
    L: Laplacian,
    grid: Sequence[float],
    K: int = DEFAULT_ORDER,
    sensitivity: float = 1.0,
    smoothing: float = 0.0,
) -> TimeSelection:
    grid = tuple(float(t) for t in grid)
    if len(grid) < 5:
        raise ParameterError(f"time grid needs at least 5 values, got {len(grid)}")
    if any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("time grid must be positive and strictly increasing")

    entropies = heat_entropies(L, grid, K)
    if not all(np.isfinite(entropies)):
        raise NumericalError("select_time_knee", "entropy curve has non-finite values")

    index = entropy_knee(grid, entropies, sensitivity=sensitivity, smoothing=smoothing)
    found = index is not None
    if index is None:
        index = len(grid) // 2
        logger.warning(f"no knee in the entropy curve, using the grid midpoint t={grid[index]:g}")
    else:
        logger.info(f"selected diffusion time t={grid[index]:g} at the entropy knee")

    return TimeSelection(
        grid=grid,
        entropies=tuple(float(e) for e in entropies),
        chosen=grid[index],
        found_knee=found,
        index=index,
    )
