from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from conftest import Workspace, attempt, parse_matrix, path_adjacency
from pytest_bdd import given, parsers, scenarios, then, when
from typeguard import typechecked

from heatgeo.distance import (
    DistanceMatrix,
    HarnackParams,
    diffusion_map_distance,
    harnack_distances,
    heat_geodesic,
    interpolate,
    phate_potential,
    poisson_multiscale_kernel,
    transition_matrix,
    triplet_distance,
)

scenarios("distance.feature")


def _distances(workspace: Workspace, name: str) -> DistanceMatrix:
    assert name in workspace.distances, f"no {name} distances: {workspace.error}"
    return workspace.distances[name]


def _store(workspace: Workspace, name: str, distances):
    if distances is not None:
        workspace.distances[name] = distances


@given("two disconnected edges")
@typechecked
def given_disconnected_edges(workspace: Workspace):
    workspace.adjacency = sp.csr_matrix(sp.block_diag([path_adjacency(2), path_adjacency(2)]))


## Heat-geodesics.


@when(parsers.parse("I compute heat-geodesic distances with sigma={sigma:g}"))
@typechecked
def when_heat_geodesic(sigma: float, workspace: Workspace):
    kernel = workspace.kernel("exact")
    _store(workspace, "heat_geodesic", attempt(workspace, lambda: heat_geodesic(kernel, HarnackParams(sigma=sigma))))


@when(parsers.parse("I compute squared heat-geodesic distances with sigma={sigma:g} and rho={rho:g}"))
@typechecked
def when_squared_heat_geodesic(sigma: float, rho: float, workspace: Workspace):
    kernel = workspace.kernel("exact")
    params = HarnackParams(sigma=sigma, rho=rho, squared=True)
    _store(workspace, "heat_geodesic", harnack_distances(kernel.matrix, kernel.time, params))


@when(parsers.parse("I create Harnack parameters with sigma={sigma:g}, rho={rho:g} and floor={floor:g}"))
@typechecked
def when_create_params(sigma: float, rho: float, floor: float, workspace: Workspace):
    attempt(workspace, lambda: HarnackParams(sigma=sigma, rho=rho, floor=floor))


@when(parsers.parse("I create a distance matrix from {matrix}"))
@typechecked
def when_create_distances(matrix: str, workspace: Workspace):
    attempt(workspace, lambda: DistanceMatrix(parse_matrix(matrix), provenance="input"))


@then(
    parsers.parse(
        "the {name:w} distance between {i:d} and {j:d} should be {value:g} within {tolerance:g}"
    )
)
@typechecked
def should_have_distance(name: str, i: int, j: int, value: float, tolerance: float, workspace: Workspace):
    D = _distances(workspace, name).matrix
    assert abs(D[i, j] - value) <= tolerance, f"d({i}, {j}) = {D[i, j]!r}"
    assert D[i, j] == D[j, i]


@then(parsers.parse("the {name:w} distances should be symmetric with a zero diagonal"))
@typechecked
def should_be_symmetric(name: str, workspace: Workspace):
    D = _distances(workspace, name).matrix
    assert np.allclose(D, D.T, atol=1e-12)
    assert np.all(np.diag(D) == 0)
    assert np.all(D >= 0) and np.all(np.isfinite(D))


@then("some kernel entries should have been floored")
@typechecked
def should_floor(workspace: Workspace):
    assert _distances(workspace, "heat_geodesic").floored > 0


def _hops(n: int) -> np.ndarray:
    index = np.arange(n)
    difference = np.abs(index[:, None] - index[None, :])
    return np.minimum(difference, n - difference)


# For each base vertex, whenever `key` orders two targets strictly so must the distances.
def _assert_ranked_by(D: np.ndarray, key: np.ndarray, margin: float):
    n = D.shape[0]
    for x in range(n):
        for y in range(n):
            for z in range(n):
                if key[x, y] < key[x, z] - margin:
                    assert D[x, y] < D[x, z], f"base {x}: d({x}, {y}) = {D[x, y]}, d({x}, {z}) = {D[x, z]}"


@then("the heat_geodesic distances should rank vertices by hop distance")
@typechecked
def should_rank_by_hops(workspace: Workspace):
    D = _distances(workspace, "heat_geodesic").matrix
    _assert_ranked_by(D, _hops(D.shape[0]), 0.5)


@then("the heat_geodesic distances should rank vertices like -log of the kernel")
@typechecked
def should_rank_by_kernel(workspace: Workspace):
    D = _distances(workspace, "heat_geodesic").matrix
    _assert_ranked_by(D, -np.log(workspace.kernel("exact").matrix), 1e-9)


## Triplet distance and interpolation.


@when("I compute the triplet distance")
@typechecked
def when_triplet(workspace: Workspace):
    workspace.distances["triplet"] = triplet_distance(_distances(workspace, "input"))


@when(parsers.parse("I interpolate with rho={rho:g}"))
@typechecked
def when_interpolate(rho: float, workspace: Workspace):
    D = _distances(workspace, "input")
    DT = _distances(workspace, "triplet")
    _store(workspace, "interpolated", attempt(workspace, lambda: interpolate(D, DT, rho)))


@then(
    parsers.parse(
        "perturbing one pair of {count:d} random {n:d}-point distance matrices should grow its triplet distance by at most the perturbation ratio"
    )
)
@typechecked
def should_be_robust(count: int, n: int):
    rng = np.random.default_rng(0)
    for _ in range(count):
        points = rng.normal(size=(n, 3))
        D = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
        before = triplet_distance(D).matrix
        i, j = rng.choice(n, size=2, replace=False)
        for epsilon in (0.01, 0.1, 1.0):
            perturbed = D.copy()
            perturbed[i, j] += epsilon
            perturbed[j, i] += epsilon
            after = triplet_distance(perturbed).matrix
            growth = (after[i, j] / before[i, j]) ** 2
            bound = ((D[i, j] + epsilon) / D[i, j]) ** 2
            assert growth <= bound + 1e-12, f"pair ({i}, {j}), epsilon {epsilon}: {growth} > {bound}"


## Comparison distances.


@when(
    parsers.parse(
        "I compute the diffusion-map distance with {t:d} steps and {weighting:w} weighting"
    )
)
@typechecked
def when_diffusion_map(t: int, weighting: str, workspace: Workspace):
    W = workspace.require_adjacency()
    _store(
        workspace,
        "diffusion_map",
        attempt(workspace, lambda: diffusion_map_distance(W, t, weighting)),  # type: ignore
    )


@when("I compute the PHATE potential of the exact kernel")
@typechecked
def when_phate(workspace: Workspace):
    H = workspace.kernel("exact")
    symmetric = (H.matrix + H.matrix.T) * 0.5
    workspace.distances["phate_potential"] = phate_potential(symmetric, H.time)


@then(
    parsers.parse(
        "the {name:w} distances should be 4t times the {other:w} distances within {tolerance:g}"
    )
)
@typechecked
def should_be_scaled(name: str, other: str, tolerance: float, workspace: Workspace):
    t = workspace.kernel("exact").time
    D = _distances(workspace, name).matrix
    expected = 4.0 * t * _distances(workspace, other).matrix
    error = np.abs(D - expected) / np.maximum(1.0, np.abs(expected))
    assert error.max() <= tolerance, f"max relative error {error.max()}"


@when(parsers.parse("I compute the Poisson multiscale kernel at t={t:g} up to order {order:d}"))
@typechecked
def when_poisson_order(t: float, order: int, workspace: Workspace):
    workspace.values["poisson"] = poisson_multiscale_kernel(workspace.require_adjacency(), t, order)


@when(parsers.parse("I compute the Poisson multiscale kernel at t={t:g}"))
@typechecked
def when_poisson(t: float, workspace: Workspace):
    workspace.values["poisson"] = poisson_multiscale_kernel(workspace.require_adjacency(), t)


@then(parsers.parse("the Poisson kernel should be {scale:g} times the identity within {tolerance:g}"))
@typechecked
def should_be_scaled_identity(scale: float, tolerance: float, workspace: Workspace):
    matrix = workspace.values["poisson"].matrix
    assert np.abs(matrix - scale * np.eye(matrix.shape[0])).max() <= tolerance


@then(parsers.parse("the Poisson tail mass should be below {bound:g}"))
@typechecked
def should_truncate(bound: float, workspace: Workspace):
    assert workspace.values["poisson"].tail_mass < bound


@then(parsers.parse("the Poisson kernel should match exp(-t L_rw) within {tolerance:g}"))
@typechecked
def should_match_random_walk_heat(tolerance: float, workspace: Workspace):
    kernel = workspace.values["poisson"]
    P = transition_matrix(workspace.require_adjacency()).toarray()
    expected = scipy.linalg.expm(-kernel.time * (np.eye(P.shape[0]) - P))
    error = np.abs(kernel.matrix - expected).max()
    assert error <= tolerance, f"max error {error}"
