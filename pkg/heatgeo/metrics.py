from __future__ import annotations

from dataclasses import asdict, dataclass, field
from logging import getLogger
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist
from scipy.stats import rankdata
from sklearn.cluster import KMeans
from sklearn.metrics import (
    adjusted_mutual_info_score,
    adjusted_rand_score,
    homogeneity_score,
)

from .distance import SHORTEST_PATH, DistanceMatrix
from .embedding import Embedding
from .errors import ParameterError
from .graph import require_connected
from .types import FloatArray, IntArray

logger = getLogger(__name__)

# Largest group size used by the interpolation EMD.
MAX_INTERPOLATION_SIZE = 500

KMEANS_RESTARTS = 10


class NormDiffs(NamedTuple):
    # Norms of D / ||D||_F - Dhat / ||Dhat||_F, or NaN when either matrix is zero.
    frob: float
    max: float
    # Norms of D - Dhat.
    frob_raw: float
    max_raw: float
    # False when a zero matrix made the normalized variant undefined.
    normalized: bool = True


class ClusterScores(NamedTuple):
    homogeneity: float
    ami: float
    ari: float


# Flat evaluation record. Metrics that weren't computed are left out of the JSON.
@dataclass
class EvalReport:
    pearson: Optional[float] = None
    spearman: Optional[float] = None
    frob_norm: Optional[float] = None
    max_norm: Optional[float] = None
    frob_norm_raw: Optional[float] = None
    max_norm_raw: Optional[float] = None
    homogeneity: Optional[float] = None
    ami: Optional[float] = None
    ari: Optional[float] = None
    emd: Optional[float] = None
    emd_control: Optional[float] = None
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "config" and value is not None and not np.isfinite(value):
                raise ParameterError(f"{name} is not finite: {value}")

    def to_json(self) -> Dict[str, Any]:
        document = {
            name: float(value)
            for name, value in asdict(self).items()
            if name != "config" and value is not None
        }
        if self.config:
            document["config"] = dict(self.config)
        return document


def _matrices(D: Union[DistanceMatrix, FloatArray], Dhat: Union[DistanceMatrix, FloatArray]) -> Tuple[FloatArray, FloatArray]:
    a = D.matrix if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)
    b = Dhat.matrix if isinstance(Dhat, DistanceMatrix) else np.asarray(Dhat, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"cannot compare matrices of shapes {a.shape} and {b.shape}")
    return a, b


def _off_diagonal(matrix: FloatArray) -> FloatArray:
    n = matrix.shape[0]
    return matrix[~np.eye(n, dtype=bool)].reshape(n, n - 1)


def _mean_row_pearson(a: FloatArray, b: FloatArray, what: str) -> float:
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    denominator = np.sqrt((a**2).sum(axis=1) * (b**2).sum(axis=1))
    constant = denominator == 0
    if np.any(constant):
        logger.warning(f"{int(constant.sum())} constant rows in the {what} correlation, scored as 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        per_row = np.where(constant, 0.0, (a * b).sum(axis=1) / denominator)
    return float(per_row.mean())


# Mean over rows of the Pearson and Spearman correlations between D_i and Dhat_i, with
# the diagonal left out.
def row_correlations(
    D: Union[DistanceMatrix, FloatArray], Dhat: Union[DistanceMatrix, FloatArray]
) -> Tuple[float, float]:
    a, b = _matrices(D, Dhat)
    if a.shape[0] < 3:
        raise ParameterError(f"row correlations need at least 3 points, got {a.shape[0]}")
    a, b = _off_diagonal(a), _off_diagonal(b)
    pearson = _mean_row_pearson(a, b, "Pearson")
    spearman = _mean_row_pearson(
        rankdata(a, method="average", axis=1), rankdata(b, method="average", axis=1), "Spearman"
    )
    return pearson, spearman


def norm_diffs(
    D: Union[DistanceMatrix, FloatArray], Dhat: Union[DistanceMatrix, FloatArray]
) -> NormDiffs:
    a, b = _matrices(D, Dhat)
    difference = a - b
    frob_raw = float(np.linalg.norm(difference))
    max_raw = float(np.abs(difference).max()) if difference.size else 0.0

    scale_a, scale_b = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if scale_a == 0 or scale_b == 0:
        logger.warning("zero distance matrix, only raw norm differences are defined")
        return NormDiffs(np.nan, np.nan, frob_raw, max_raw, normalized=False)
    normalized = a / scale_a - b / scale_b
    return NormDiffs(
        frob=float(np.linalg.norm(normalized)),
        max=float(np.abs(normalized).max()),
        frob_raw=frob_raw,
        max_raw=max_raw,
    )


def label_scores(true_labels: Sequence[int], predicted: Sequence[int]) -> ClusterScores:
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    if true_labels.shape != predicted.shape:
        raise ParameterError(f"{true_labels.size} true labels for {predicted.size} predictions")
    return ClusterScores(
        homogeneity=float(homogeneity_score(true_labels, predicted)),
        ami=float(adjusted_mutual_info_score(true_labels, predicted)),
        ari=float(adjusted_rand_score(true_labels, predicted)),
    )


# k-means (k-means++ seeding, best of several restarts) on the embedding, scored against
# the true labels.
def clustering_scores(
    embedding: Union[Embedding, FloatArray],
    true_labels: Sequence[int],
    n_clusters: int,
    seed: int = 0,
) -> ClusterScores:
    coords = embedding.coords if isinstance(embedding, Embedding) else np.asarray(embedding)
    n = coords.shape[0]
    if n_clusters < 2 or n_clusters >= n:
        raise ParameterError(f"n_clusters must be in [2, {n - 1}] for {n} points, got {n_clusters}")
    if np.unique(true_labels).size < 2:
        raise ParameterError("true labels need at least 2 classes")

    kmeans = KMeans(
        n_clusters=n_clusters, init="k-means++", n_init=KMEANS_RESTARTS, random_state=seed
    )
    predicted = kmeans.fit_predict(coords)
    return label_scores(true_labels, predicted)


# Exact earth mover's distance between two equal-size point sets with uniform mass: the
# mean Euclidean cost of the optimal assignment.
def emd(a: FloatArray, b: FloatArray) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape or a.shape[0] == 0:
        raise ParameterError(f"EMD needs two nonempty sets of equal shape, got {a.shape} and {b.shape}")
    cost = cdist(a, b, metric="euclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _subsample(rng: np.random.Generator, points: FloatArray, m: int) -> FloatArray:
    if points.shape[0] == m:
        return points
    return points[np.sort(rng.choice(points.shape[0], size=m, replace=False))]


# The groups at the time before `held_out`, at `held_out` and at the time after it.
def _interpolation_groups(
    coords: FloatArray, timepoints: IntArray, held_out: int
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    if timepoints.shape[0] != coords.shape[0]:
        raise ParameterError(f"{timepoints.shape[0]} timepoints for {coords.shape[0]} points")

    times = np.unique(timepoints)
    position = np.searchsorted(times, held_out)
    if position >= times.size or times[position] != held_out:
        raise ParameterError(f"held-out time {held_out} has no points")
    if position == 0 or position == times.size - 1:
        raise ParameterError(f"held-out time {held_out} needs a preceding and a following time")

    before = coords[timepoints == times[position - 1]]
    after = coords[timepoints == times[position + 1]]
    target = coords[timepoints == held_out]
    return before, after, target


def _midpoint_emd(
    rng: np.random.Generator,
    before: FloatArray,
    after: FloatArray,
    target: FloatArray,
    max_size: int,
) -> Tuple[float, int]:
    m = min(before.shape[0], after.shape[0], target.shape[0], max_size)
    before, after, target = (_subsample(rng, group, m) for group in (before, after, target))
    rows, cols = linear_sum_assignment(cdist(before, after, metric="sqeuclidean"))
    predicted = 0.5 * (before[rows] + after[cols])
    return emd(predicted, target), m


# Predict the held-out time from its neighbors by displacement interpolation (midpoints
# of an optimal squared-cost matching), and score the prediction by EMD against the true
# held-out points.
def interpolation_emd(
    embedding: Union[Embedding, FloatArray],
    timepoints: Sequence[int],
    held_out: int,
    seed: int = 0,
    max_size: int = MAX_INTERPOLATION_SIZE,
) -> float:
    coords = embedding.coords if isinstance(embedding, Embedding) else np.asarray(embedding)
    before, after, target = _interpolation_groups(coords, np.asarray(timepoints), held_out)

    rng = np.random.Generator(np.random.Philox(seed))
    value, m = _midpoint_emd(rng, before, after, target, max_size)
    logger.debug(f"interpolation EMD at time {held_out} with {m} points per group: {value:.6g}")
    return value


# Control for interpolation_emd: the points of the two neighboring times are pooled and
# randomly reassigned to them, keeping both group sizes, before interpolating. The
# held-out points are untouched.
def shuffled_interpolation_emd(
    embedding: Union[Embedding, FloatArray],
    timepoints: Sequence[int],
    held_out: int,
    seed: int = 0,
    max_size: int = MAX_INTERPOLATION_SIZE,
) -> float:
    coords = embedding.coords if isinstance(embedding, Embedding) else np.asarray(embedding)
    before, after, target = _interpolation_groups(coords, np.asarray(timepoints), held_out)

    rng = np.random.Generator(np.random.Philox(seed))
    pooled = rng.permutation(np.vstack([before, after]))
    before, after = pooled[: before.shape[0]], pooled[before.shape[0] :]
    value, m = _midpoint_emd(rng, before, after, target, max_size)
    logger.debug(f"shuffled interpolation EMD at time {held_out} with {m} points per group: {value:.6g}")
    return value


# All-pairs Dijkstra over the k-NN edges, weighted by their ambient lengths.
def shortest_path_baseline(lengths: sp.spmatrix) -> DistanceMatrix:
    lengths = sp.csr_matrix(lengths, dtype=np.float64)
    require_connected(lengths, "shortest path baseline")
    matrix = shortest_path(lengths, method="D", directed=False)
    return DistanceMatrix(
        matrix=(matrix + matrix.T) * 0.5,
        provenance=SHORTEST_PATH,
    )


def evaluate_distances(
    reference: Union[DistanceMatrix, FloatArray], estimate: Union[DistanceMatrix, FloatArray]
) -> Dict[str, float]:
    pearson, spearman = row_correlations(reference, estimate)
    norms = norm_diffs(reference, estimate)
    scores = {
        "pearson": pearson,
        "spearman": spearman,
        "frob_norm_raw": norms.frob_raw,
        "max_norm_raw": norms.max_raw,
    }
    if norms.normalized:
        scores.update(frob_norm=norms.frob, max_norm=norms.max)
    return scores
