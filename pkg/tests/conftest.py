from __future__ import annotations

import json
import os
from typing import Any, Callable, Dict, List, Optional, TypeVar

import numpy as np
import scipy.sparse as sp
from pytest import fixture
from pytest_bdd import given, parsers, then, when
from pytest_bdd.parser import Feature, Step
from rich.console import Console
from rich.table import Table
from rich.text import Text
from typeguard import typechecked

from heatgeo.distance import DistanceMatrix
from heatgeo.embedding import Embedding
from heatgeo.errors import HeatGeoError
from heatgeo.graph import Graph, Laplacian, PointCloud, laplacian
from heatgeo.heat import HeatKernel, chebyshev_heat, euler_heat, exact_heat

is_debug = "DEBUG" in os.environ

T = TypeVar("T")

# Closed-form values for the 2-node unit-weight graph at t = 0.5, whose Laplacian has
# eigenvalues {0, 2}: (1 +- e^-1) / 2.
TWO_NODE_DIAGONAL = 0.5 * (1.0 + np.exp(-1.0))
TWO_NODE_OFF_DIAGONAL = 0.5 * (1.0 - np.exp(-1.0))


# Error handling.
@typechecked
def pytest_bdd_step_error(step: Step, feature: Feature, step_func_args: Dict[str, Any]):
    console = Console()
    console.print(
        f"\n[bright_red bold]{feature.rel_filename}:{step.line_number}:[/bright_red bold] [red]{step.name}[/red]"
    )
    workspace: Optional[Workspace] = step_func_args.get("workspace")
    if workspace is not None:
        workspace.print(console)


@typechecked
def pytest_bdd_after_step(step: Step, feature: Feature, step_func_args: Dict[str, Any]):
    if is_debug:
        console = Console()
        console.print(
            f"\n[green bold]{feature.rel_filename}:{step.line_number}:[/green bold] {step.keyword} {step.name}"
        )
        workspace: Optional[Workspace] = step_func_args.get("workspace")
        if workspace is not None:
            workspace.print(console)


# Everything a scenario has built so far. Steps fill in whatever they produce, and later
# steps read it back.
class Workspace:
    def __init__(self) -> None:
        self.cloud: Optional[PointCloud] = None
        self.adjacency: Optional[sp.csr_matrix] = None
        self.graph: Optional[Graph] = None
        self.laplacian: Optional[Laplacian] = None

        # Heat kernels by method name ("exact", "chebyshev", "euler").
        self.kernels: Dict[str, HeatKernel] = {}

        # Distance matrices by name, e.g. "input", "heat_geodesic", "triplet".
        self.distances: Dict[str, DistanceMatrix] = {}

        self.embedding: Optional[Embedding] = None

        # Anything else worth keeping between steps.
        self.values: Dict[str, Any] = {}

        # Error raised by the most recent attempted step, if any.
        self.error: Optional[Exception] = None

    def require_laplacian(self) -> Laplacian:
        assert self.laplacian is not None, "no Laplacian has been computed"
        return self.laplacian

    def require_adjacency(self) -> sp.csr_matrix:
        if self.adjacency is None and self.graph is not None:
            return self.graph.adjacency
        assert self.adjacency is not None, "no graph has been built"
        return self.adjacency

    def kernel(self, name: str) -> HeatKernel:
        assert name in self.kernels, f"no {name} heat kernel, have {sorted(self.kernels)}"
        return self.kernels[name]

    def _create_table(self) -> Table:
        def describe(value: Any) -> Text:
            if isinstance(value, np.ndarray):
                return Text(f"array {value.shape}\n{np.array2string(value, precision=4, threshold=50)}")
            if isinstance(value, sp.spmatrix):
                return Text(f"sparse {value.shape}, {value.nnz} entries")
            return Text(repr(value))

        table = Table(show_header=False, show_lines=True)
        if self.cloud is not None:
            table.add_row("cloud", describe(self.cloud.data))
        if self.adjacency is not None:
            table.add_row("adjacency", describe(self.adjacency.toarray()))
        if self.graph is not None:
            table.add_row(
                "graph", Text(f"{self.graph.n} vertices, {self.graph.n_components} components")
            )
        if self.laplacian is not None:
            table.add_row(f"{self.laplacian.kind} Laplacian", describe(self.laplacian.dense()))
        for name, kernel in self.kernels.items():
            table.add_row(f"{name} kernel", Text(kernel.describe()))
        for name, distances in self.distances.items():
            table.add_row(f"{name} distances", describe(distances.matrix))
        if self.embedding is not None:
            table.add_row(
                "embedding", Text(f"stress {self.embedding.stress:.6g}, {len(self.embedding.trace)} trace entries")
            )
        for name, value in self.values.items():
            table.add_row(name, describe(value))
        if self.error is not None:
            table.add_row("error", Text(f"{type(self.error).__name__}: {self.error}", style="red"))
        return table

    def print(self, console: Optional[Console] = None):
        if console is None:
            console = Console()

        console.print(self._create_table())


# Run `fn`, recording rather than raising any library error.
def attempt(workspace: Workspace, fn: Callable[[], T]) -> Optional[T]:
    workspace.error = None
    try:
        return fn()
    except (HeatGeoError, ValueError) as e:
        workspace.error = e
        return None


## Small graphs with unit weights.


def _from_edges(n: int, edges: List[tuple], weights: Optional[List[float]] = None) -> sp.csr_matrix:
    if weights is None:
        weights = [1.0] * len(edges)
    rows = [i for i, _ in edges] + [j for _, j in edges]
    cols = [j for _, j in edges] + [i for i, _ in edges]
    return sp.csr_matrix((weights + weights, (rows, cols)), shape=(n, n))


def path_adjacency(n: int) -> sp.csr_matrix:
    return _from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_adjacency(n: int) -> sp.csr_matrix:
    return _from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_adjacency(n: int) -> sp.csr_matrix:
    return _from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


# A path backbone (for connectivity) plus random extra edges, all with weights in
# [0.5, 2].
def random_connected_adjacency(n: int, seed: int) -> sp.csr_matrix:
    rng = np.random.default_rng(seed)
    edges = {(i, i + 1) for i in range(n - 1)}
    for _ in range(2 * n):
        i, j = rng.choice(n, size=2, replace=False)
        edges.add((int(min(i, j)), int(max(i, j))))
    ordered = sorted(edges)
    weights = list(rng.uniform(0.5, 2.0, size=len(ordered)))
    return _from_edges(n, ordered, weights)


def random_cloud(n: int, dim: int, seed: int) -> PointCloud:
    return PointCloud(data=np.random.default_rng(seed).normal(size=(n, dim)))


def parse_matrix(text: str) -> np.ndarray:
    return np.array(json.loads(text), dtype=np.float64)


## Fixtures.


@fixture
@typechecked
def workspace() -> Workspace:
    return Workspace()


## Shared steps.


@given(parsers.parse("a path graph with {n:d} vertices"))
@typechecked
def given_path_graph(n: int, workspace: Workspace):
    workspace.adjacency = path_adjacency(n)


@given(parsers.parse("a cycle graph with {n:d} vertices"))
@typechecked
def given_cycle_graph(n: int, workspace: Workspace):
    workspace.adjacency = cycle_adjacency(n)


@given(parsers.parse("a complete graph with {n:d} vertices"))
@typechecked
def given_complete_graph(n: int, workspace: Workspace):
    workspace.adjacency = complete_adjacency(n)


@given(parsers.parse("a random connected graph with {n:d} vertices from seed {seed:d}"))
@typechecked
def given_random_graph(n: int, seed: int, workspace: Workspace):
    workspace.adjacency = random_connected_adjacency(n, seed)


@given(parsers.parse("the distance matrix {matrix}"))
@typechecked
def given_distance_matrix(matrix: str, workspace: Workspace):
    workspace.distances["input"] = DistanceMatrix(parse_matrix(matrix), provenance="input")


@when(parsers.parse("I take the {kind:w} Laplacian"))
@given(parsers.parse("its {kind:w} Laplacian"))
@typechecked
def when_take_laplacian(kind: str, workspace: Workspace):
    workspace.laplacian = attempt(
        workspace,
        lambda: laplacian(workspace.require_adjacency(), kind),  # type: ignore
    )


@when(parsers.parse("I compute the exact heat kernel at t={t:g}"))
@typechecked
def when_exact_heat(t: float, workspace: Workspace):
    kernel = attempt(workspace, lambda: exact_heat(workspace.require_laplacian(), t))
    if kernel is not None:
        workspace.kernels["exact"] = kernel


@when(parsers.parse("I compute the Chebyshev heat kernel at t={t:g} with K={K:d}"))
@typechecked
def when_chebyshev_heat(t: float, K: int, workspace: Workspace):
    kernels = attempt(workspace, lambda: chebyshev_heat(workspace.require_laplacian(), [t], K))
    if kernels is not None:
        workspace.kernels["chebyshev"] = kernels[0]


@when(parsers.parse("I compute the Euler heat kernel at t={t:g} with K={K:d}"))
@typechecked
def when_euler_heat(t: float, K: int, workspace: Workspace):
    kernel = attempt(workspace, lambda: euler_heat(workspace.require_laplacian(), t, K))
    if kernel is not None:
        workspace.kernels["euler"] = kernel


@then(parsers.parse("a {error:w} should be raised"))
@typechecked
def should_raise(error: str, workspace: Workspace):
    assert workspace.error is not None, f"expected a {error}, but nothing was raised"
    names = [cls.__name__ for cls in type(workspace.error).__mro__]
    assert error in names, f"expected a {error}, got {type(workspace.error).__name__}: {workspace.error}"


@then("no error should be raised")
@typechecked
def should_not_raise(workspace: Workspace):
    assert workspace.error is None, f"unexpected {type(workspace.error).__name__}: {workspace.error}"


@then(parsers.parse('the error message should mention "{text}"'))
@typechecked
def should_mention(text: str, workspace: Workspace):
    assert workspace.error is not None, "nothing was raised"
    assert text in str(workspace.error), f'"{text}" not in "{workspace.error}"'


@given(parsers.parse("{n:d} random points in {dim:d} dimensions from seed {seed:d}"))
@typechecked
def given_random_points(n: int, dim: int, seed: int, workspace: Workspace):
    workspace.cloud = random_cloud(n, dim, seed)
