from __future__ import annotations

from typing import List

import numpy as np
import scipy.linalg
from conftest import Workspace, attempt, parse_matrix
from pytest_bdd import given, parsers, scenarios, then, when
from scipy.spatial.distance import pdist, squareform
from typeguard import typechecked

from heatgeo.distance import kernel_row_distance
from heatgeo.heat import (
    chebyshev_heat,
    entropy_knee,
    exact_heat,
    find_knee,
    heat_eigenmap,
    heat_entropy,
    log_time_grid,
    select_time_knee,
)

scenarios("heat.feature")


def _floats(text: str) -> List[float]:
    return [float(value) for value in text.split(",")]


def _chebyshev_error(workspace: Workspace, t: float, K: int) -> float:
    L = workspace.require_laplacian()
    approximation = chebyshev_heat(L, [t], K)[0].matrix
    return float(np.abs(approximation - exact_heat(L, t).matrix).max())


## Kernels.


@then(parsers.parse("the {name:w} kernel should be [{rows}] within {tolerance:g}"))
@typechecked
def should_be_kernel(name: str, rows: str, tolerance: float, workspace: Workspace):
    expected = parse_matrix(f"[{rows}]")
    actual = workspace.kernel(name).matrix
    assert np.abs(actual - expected).max() <= tolerance, f"got {actual}"


@then(parsers.parse("the {name:w} kernel should be the identity within {tolerance:g}"))
@typechecked
def should_be_identity(name: str, tolerance: float, workspace: Workspace):
    H = workspace.kernel(name).matrix
    assert np.abs(H - np.eye(H.shape[0])).max() <= tolerance


@then(parsers.parse("the {name:w} kernel should match the exact kernel within {tolerance:g}"))
@typechecked
def should_match_exact(name: str, tolerance: float, workspace: Workspace):
    error = np.abs(workspace.kernel(name).matrix - workspace.kernel("exact").matrix).max()
    assert error <= tolerance, f"max error {error}"


@then(parsers.parse("the {name:w} kernel should be symmetric within {tolerance:g}"))
@typechecked
def should_be_symmetric(name: str, tolerance: float, workspace: Workspace):
    H = workspace.kernel(name).matrix
    assert np.abs(H - H.T).max() <= tolerance


@then(parsers.parse("the {name:w} kernel rows should sum to 1 within {tolerance:g}"))
@typechecked
def should_be_stochastic(name: str, tolerance: float, workspace: Workspace):
    H = workspace.kernel(name).matrix
    assert np.abs(H.sum(axis=1) - 1.0).max() <= tolerance


@then(parsers.parse("the {name:w} kernel entries should lie in [0, 1]"))
@typechecked
def should_be_bounded(name: str, workspace: Workspace):
    H = workspace.kernel(name).matrix
    assert H.min() >= -1e-12 and H.max() <= 1.0 + 1e-12


@then(parsers.parse("every entry of the {name:w} kernel should be 1/3 within {tolerance:g}"))
@typechecked
def should_be_uniform(name: str, tolerance: float, workspace: Workspace):
    assert np.abs(workspace.kernel(name).matrix - 1.0 / 3.0).max() <= tolerance


@then(parsers.parse("every entry of the {name:w} kernel should be positive"))
@typechecked
def should_be_positive(name: str, workspace: Workspace):
    assert workspace.kernel(name).matrix.min() > 0


@then(parsers.parse("the {name:w} kernel entropy should be {value:g} within {tolerance:g}"))
@typechecked
def should_have_entropy(name: str, value: float, tolerance: float, workspace: Workspace):
    entropy = heat_entropy(workspace.kernel(name))
    assert abs(entropy - value) <= tolerance, f"entropy {entropy}"


@then(parsers.parse("the {name:w} kernel should satisfy the semigroup property within {tolerance:g}"))
@typechecked
def should_be_semigroup(name: str, tolerance: float, workspace: Workspace):
    H = workspace.kernel(name)
    doubled = exact_heat(workspace.require_laplacian(), 2 * H.time).matrix
    assert np.abs(H.matrix @ H.matrix - doubled).max() <= tolerance


@then(parsers.parse("the {name:w} kernel should equal the matrix exponential of -tL"))
@typechecked
def should_be_expm(name: str, workspace: Workspace):
    H = workspace.kernel(name)
    expected = scipy.linalg.expm(-H.time * workspace.require_laplacian().dense())
    assert np.abs(H.matrix - expected).max() <= 1e-10


@then(parsers.parse("the Chebyshev error at t={t:g} should not increase over K = {orders}"))
@typechecked
def should_converge(t: float, orders: str, workspace: Workspace):
    errors = [_chebyshev_error(workspace, t, int(K)) for K in _floats(orders)]
    for previous, current in zip(errors, errors[1:]):
        assert current <= previous + 1e-12, f"errors {errors}"


@then(parsers.parse("the Chebyshev error at t={t:g} with K={K:d} should be at most {bound:g}"))
@typechecked
def should_be_accurate(t: float, K: int, bound: float, workspace: Workspace):
    error = _chebyshev_error(workspace, t, K)
    assert error <= bound, f"max error {error}"


@then(
    parsers.parse(
        "computing times {times} together should match computing them one at a time within {tolerance:g}"
    )
)
@typechecked
def should_batch(times: str, tolerance: float, workspace: Workspace):
    L = workspace.require_laplacian()
    grid = _floats(times)
    batched = chebyshev_heat(L, grid, 30)
    for t, kernel in zip(grid, batched):
        single = chebyshev_heat(L, [t], 30)[0]
        assert kernel.time == t
        assert np.abs(kernel.matrix - single.matrix).max() <= tolerance


@then(parsers.parse("the exact kernel entropy should not decrease over t = {times}"))
@typechecked
def should_increase_entropy(times: str, workspace: Workspace):
    L = workspace.require_laplacian()
    entropies = [heat_entropy(exact_heat(L, t)) for t in _floats(times)]
    for previous, current in zip(entropies, entropies[1:]):
        assert current >= previous - 1e-10, f"entropies {entropies}"


@then(
    parsers.parse(
        "the distances between exact kernel rows should equal the eigenmap distances within {tolerance:g}"
    )
)
@typechecked
def should_match_eigenmap(tolerance: float, workspace: Workspace):
    H = workspace.kernel("exact")
    rows = kernel_row_distance(H.matrix)
    coordinates = heat_eigenmap(workspace.require_laplacian(), H.time)
    assert np.abs(rows - squareform(pdist(coordinates))).max() <= tolerance


## Knee detection.


@given(parsers.parse("the curve y = 1 - exp(-x) sampled at {n:d} points on [{start:g}, {stop:g}]"))
@typechecked
def given_saturating_curve(n: int, start: float, stop: float, workspace: Workspace):
    x = np.linspace(start, stop, n)
    workspace.values.update(x=x, y=1.0 - np.exp(-x))


@given(parsers.parse("the curve y = x sampled at {n:d} points on [{start:g}, {stop:g}]"))
@typechecked
def given_line(n: int, start: float, stop: float, workspace: Workspace):
    x = np.linspace(start, stop, n)
    workspace.values.update(x=x, y=x.copy())


@when("I look for its knee")
@typechecked
def when_find_knee(workspace: Workspace):
    workspace.values["knee"] = find_knee(workspace.values["x"], workspace.values["y"])


@then(parsers.parse("the knee should be at x = {x:g} within {tolerance:g}"))
@typechecked
def should_find_knee(x: float, tolerance: float, workspace: Workspace):
    knee = workspace.values["knee"]
    assert knee is not None, "no knee found"
    assert abs(workspace.values["x"][knee] - x) <= tolerance, f"knee at {workspace.values['x'][knee]}"


@then("no knee should be found")
@typechecked
def should_not_find_knee(workspace: Workspace):
    assert workspace.values["knee"] is None


@given(
    parsers.parse(
        "entropies min(log t, log {cap:g}) over {count:d} log-spaced times in [{start:g}, {stop:g}]"
    )
)
@typechecked
def given_capped_entropies(cap: float, count: int, start: float, stop: float, workspace: Workspace):
    grid = np.asarray(log_time_grid(start, stop, count))
    workspace.values.update(grid=grid, entropies=np.minimum(np.log(grid), np.log(cap)))


@when("I look for the entropy knee")
@typechecked
def when_find_entropy_knee(workspace: Workspace):
    workspace.values["entropy_knee"] = entropy_knee(
        workspace.values["grid"], workspace.values["entropies"]
    )


@then(parsers.parse("the entropy knee should be at t = {t:g} within {tolerance:g}"))
@typechecked
def should_find_entropy_knee(t: float, tolerance: float, workspace: Workspace):
    knee = workspace.values["entropy_knee"]
    assert knee is not None, "no knee found"
    chosen = workspace.values["grid"][knee]
    assert abs(chosen - t) <= tolerance, f"knee at t={chosen}"


@then(parsers.parse("the knee against linear t should be at t = {t:g} within {tolerance:g}"))
@typechecked
def should_find_linear_knee(t: float, tolerance: float, workspace: Workspace):
    grid = workspace.values["grid"]
    linear = find_knee(grid, workspace.values["entropies"])
    assert linear is not None, "no knee found against linear t"
    assert abs(grid[linear] - t) <= tolerance, f"linear knee at t={grid[linear]}"
    assert workspace.values["entropy_knee"] is not None
    assert grid[workspace.values["entropy_knee"]] > grid[linear]


@then("the exact kernel should decrease with hop distance along the first row")
@typechecked
def should_decrease_with_hops(workspace: Workspace):
    row = workspace.kernel("exact").matrix[0]
    n = row.size
    # Vertices 0..n/2 sit at hop distances 0..n/2 from vertex 0.
    half = row[: n // 2 + 1]
    assert np.all(np.diff(half) < 0), f"first row {half}"


@when(
    parsers.parse(
        "I select the diffusion time over {count:d} log-spaced times in [{start:g}, {stop:g}]"
    )
)
@typechecked
def when_select_time(count: int, start: float, stop: float, workspace: Workspace):
    L = workspace.require_laplacian()
    workspace.values["selection"] = attempt(
        workspace, lambda: select_time_knee(L, log_time_grid(start, stop, count))
    )


@when(parsers.parse("I select the diffusion time over the times {times}"))
@typechecked
def when_select_time_grid(times: str, workspace: Workspace):
    L = workspace.require_laplacian()
    workspace.values["selection"] = attempt(workspace, lambda: select_time_knee(L, _floats(times)))


@then("the chosen time should be one of the grid times")
@typechecked
def should_choose_from_grid(workspace: Workspace):
    selection = workspace.values["selection"]
    assert selection is not None, f"selection failed: {workspace.error}"
    assert selection.chosen in selection.grid
    assert selection.grid[selection.index] == selection.chosen
    assert len(selection.entropies) == len(selection.grid)


@then("every entropy should be finite")
@typechecked
def should_have_finite_entropies(workspace: Workspace):
    assert np.all(np.isfinite(workspace.values["selection"].entropies))


@then("the entropies should match the Chebyshev kernel entropies")
@typechecked
def should_match_entropies(workspace: Workspace):
    selection = workspace.values["selection"]
    L = workspace.require_laplacian()
    for t, entropy in zip(selection.grid, selection.entropies):
        expected = heat_entropy(chebyshev_heat(L, [t], 30)[0])
        assert abs(entropy - expected) <= 1e-9 * max(1.0, abs(expected))
