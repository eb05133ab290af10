from __future__ import annotations

from logging import getLogger
from typing import NamedTuple, Optional, Tuple

from .configuration import METHODS, Configuration, validate_configuration
from .distance import (
    DEFAULT_FLOOR,
    RANDOM_WALK_GEODESIC,
    DistanceMatrix,
    HarnackParams,
    diffusion_map_distance,
    harnack_distances,
    phate_potential,
    random_walk_kernel,
)
from .embedding import (
    Embedding,
    MdsConfig,
    diffusion_map_embedding,
    heatgeo_distances,
    kernel_weights,
    smacof,
    stress,
)
from .errors import ParameterError
from .graph import Graph, Laplacian, PointCloud, build_knn_graph, laplacian
from .heat import (
    DEFAULT_ORDER,
    DEFAULT_TIME_GRID,
    HeatKernel,
    TimeSelection,
    compute_heat,
    heat_entropy,
    log_time_grid,
    select_time_knee,
)
from .metrics import shortest_path_baseline
from .types import (
    Approximation,
    Bandwidth,
    DiffusionTime,
    FloatArray,
    LaplacianKind,
    Method,
)

logger = getLogger(__name__)

# Methods that diffuse with the heat kernel rather than the random walk P^t.
HEAT_METHODS = ("heatgeo", "phate-potential")


class Estimate(NamedTuple):
    method: Method
    distances: DistanceMatrix
    graph: Graph
    # Diffusion operator the distances came from (H_t or P^t), if any.
    kernel: Optional[FloatArray] = None
    time: Optional[float] = None
    time_selection: Optional[TimeSelection] = None
    # Heat kernel entropy at the chosen time, for heat methods.
    entropy: Optional[float] = None
    heat_kernel: Optional[HeatKernel] = None


class MethodEmbedding(NamedTuple):
    embedding: Embedding
    estimate: Estimate


def _diffusion_time(
    operator: Laplacian, configuration: Configuration
) -> Tuple[float, Optional[TimeSelection]]:
    if configuration.t != "auto":
        return float(configuration.t), None
    selection = select_time_knee(
        operator,
        log_time_grid(*configuration.time_grid),
        configuration.order,
        sensitivity=configuration.knee_sensitivity,
        smoothing=configuration.knee_smoothing,
    )
    return selection.chosen, selection


# Random walks take whole steps. "auto" reuses the heat kernel entropy knee.
def _walk_steps(time: float) -> int:
    return max(1, int(round(time)))


def estimate_distances(
    cloud: PointCloud, method: Method, configuration: Optional[Configuration] = None
) -> Estimate:
    configuration = validate_configuration(configuration or Configuration())
    if method not in METHODS:
        raise ParameterError(f"unknown method: {method}")
    graph = build_knn_graph(cloud, configuration.knn, configuration.bandwidth)

    if method == "shortest-path":
        return Estimate(method, shortest_path_baseline(graph.lengths), graph)

    operator = laplacian(graph.adjacency, configuration.laplacian)
    time, selection = _diffusion_time(operator, configuration)

    if method in HEAT_METHODS:
        kernel = compute_heat(operator, time, configuration.approximation, configuration.order)
        if method == "heatgeo":
            distances = heatgeo_distances(
                kernel,
                sigma=configuration.sigma,
                rho=configuration.rho,
                floor=configuration.floor,
                squared=configuration.squared,
            )
        else:
            distances = phate_potential(kernel, floor=configuration.floor)
        logger.info(f"{method} distances from the {kernel.describe()}")
        return Estimate(
            method,
            distances,
            graph,
            kernel=kernel.matrix,
            time=time,
            time_selection=selection,
            entropy=heat_entropy(kernel),
            heat_kernel=kernel,
        )

    steps = _walk_steps(time)
    if method == "diffusion-map":
        distances = diffusion_map_distance(graph.adjacency, steps)
        kernel_matrix = random_walk_kernel(graph.adjacency, steps)
    else:
        kernel_matrix = random_walk_kernel(graph.adjacency, steps)
        if method == "phate":
            distances = phate_potential(kernel_matrix, t=steps, floor=configuration.floor)
        else:
            params = HarnackParams(
                sigma=configuration.sigma,
                rho=configuration.rho,
                floor=configuration.floor,
                squared=configuration.squared,
            )
            distances = harnack_distances(kernel_matrix, steps, params, RANDOM_WALK_GEODESIC)
    logger.info(f"{method} distances from {steps} random walk steps")
    return Estimate(
        method,
        distances,
        graph,
        kernel=kernel_matrix,
        time=float(steps),
        time_selection=selection,
    )


# Embed with metric MDS on the method's distances. Diffusion maps use their own spectral
# coordinates instead; their stress is still reported against the diffusion distance.
def embed(
    cloud: PointCloud, method: Method, configuration: Optional[Configuration] = None
) -> MethodEmbedding:
    configuration = validate_configuration(configuration or Configuration())
    estimate = estimate_distances(cloud, method, configuration)

    if method == "diffusion-map":
        assert estimate.time is not None
        coords = diffusion_map_embedding(
            estimate.graph.adjacency, int(estimate.time), configuration.n_components
        )
        value = stress(estimate.distances, coords)
        embedding = Embedding(coords=coords, stress=value, trace=(value,), converged=True)
        return MethodEmbedding(embedding, estimate)

    weights = None
    if configuration.weighted:
        if estimate.kernel is None:
            logger.warning(f"{method} has no kernel to weight the stress with, using uniform weights")
        else:
            weights = kernel_weights(estimate.kernel, configuration.floor)
    embedding = smacof(
        estimate.distances,
        MdsConfig(
            k=configuration.n_components,
            max_iters=configuration.max_iters,
            rel_tol=configuration.rel_tol,
            weights=weights,
            seed=configuration.seed,
        ),
    )
    logger.info(f"embedded {cloud.n} points with {method}, final stress {embedding.stress:.6g}")
    return MethodEmbedding(embedding, estimate)


class HeatGeoResult(NamedTuple):
    embedding: Embedding
    # Final dissimilarity handed to MDS.
    distances: DistanceMatrix
    kernel: HeatKernel
    graph: Graph
    # Present when the diffusion time was selected automatically.
    time_selection: Optional[TimeSelection] = None


# The heatgeo method with keyword arguments instead of a Configuration.
def heatgeo_embed(
    points: PointCloud,
    k_neighbors: int = 10,
    t: DiffusionTime = "auto",
    sigma: float = 1.0,
    rho: float = 0.0,
    K: int = DEFAULT_ORDER,
    k_out: int = 2,
    weighted: bool = False,
    seed: int = 0,
    *,
    bandwidth: Bandwidth = "adaptive",
    laplacian_kind: LaplacianKind = "symmetric_normalized",
    approximation: Approximation = "chebyshev",
    time_grid: Tuple[float, float, int] = DEFAULT_TIME_GRID,
    floor: float = DEFAULT_FLOOR,
    squared: bool = False,
    max_iters: int = 300,
    rel_tol: float = 1e-6,
    knee_sensitivity: float = 1.0,
    knee_smoothing: float = 0.0,
) -> HeatGeoResult:
    configuration = Configuration(
        knn=k_neighbors,
        bandwidth=bandwidth,
        laplacian=laplacian_kind,
        approximation=approximation,
        order=K,
        t=t,
        time_grid=time_grid,
        sigma=sigma,
        rho=rho,
        floor=floor,
        squared=squared,
        n_components=k_out,
        weighted=weighted,
        max_iters=max_iters,
        rel_tol=rel_tol,
        seed=seed,
        knee_sensitivity=knee_sensitivity,
        knee_smoothing=knee_smoothing,
    )
    result = embed(points, "heatgeo", configuration)
    estimate = result.estimate
    assert estimate.heat_kernel is not None
    return HeatGeoResult(
        embedding=result.embedding,
        distances=estimate.distances,
        kernel=estimate.heat_kernel,
        graph=estimate.graph,
        time_selection=estimate.time_selection,
    )
