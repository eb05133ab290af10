from __future__ import annotations

import logging
import os
from dataclasses import asdict
from functools import wraps
from logging import getLogger
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, TypeVar, Union

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from .benchmark import run_benchmark, write_benchmark
from .configuration import DATASETS, METHODS, get_benchmark_spec, get_configuration
from .datasets import generate, load_csv
from .distance import DistanceMatrix
from .errors import DataError, NumericalError, ParameterError
from .graph import build_knn_graph, laplacian
from .heat import log_time_grid, select_time_knee
from .io import (
    LABEL_COLUMN,
    dumps,
    parse_int,
    read_embedding_csv,
    read_json,
    read_matrix_csv,
    read_table,
    write_adjacency_csv,
    write_embedding_csv,
    write_entropy_csv,
    write_json,
    write_kernel_binary,
    write_matrix_csv,
)
from .methods import embed
from .metrics import (
    EvalReport,
    clustering_scores,
    evaluate_distances,
    interpolation_emd,
    shuffled_interpolation_emd,
)

logger = getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

F = TypeVar("F", bound=Callable[..., Any])


## Parameter types.


# A float, or one keyword standing for an automatic choice.
class FloatOr(click.ParamType):
    def __init__(self, keyword: str):
        self.keyword = keyword
        self.name = f"{keyword}|float"

    def convert(
        self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]
    ) -> Union[str, float]:
        if isinstance(value, float) or value == self.keyword:
            return value
        try:
            return float(value)
        except ValueError:
            self.fail(f"expected '{self.keyword}' or a number, got {value!r}", param, ctx)


## Shared options.


def common_options(function: F) -> F:
    for option in reversed(
        [
            click.option("--seed", type=int, default=0, show_default=True, help="Random seed."),
            click.option(
                "--output-dir",
                type=click.Path(file_okay=False, path_type=Path),
                default=Path("."),
                help="Directory for output files.",
            ),
            click.option(
                "--config",
                type=click.Path(dir_okay=False, path_type=Path),
                default=None,
                help="JSON configuration file.",
            ),
            click.option("--verbose", is_flag=True, help="Debug logging."),
        ]
    ):
        function = option(function)
    return function


# Unset pipeline flags stay None so that the configuration file wins.
def pipeline_options(function: F) -> F:
    for option in reversed(
        [
            click.option(
                "--input",
                "input_path",
                type=click.Path(dir_okay=False, path_type=Path),
                required=True,
                help="Point cloud CSV.",
            ),
            click.option("--knn", type=int, default=None),
            click.option("--bandwidth", type=FloatOr("adaptive"), default=None),
            click.option(
                "--laplacian",
                "laplacian_kind",
                type=click.Choice(["combinatorial", "symmetric_normalized", "random_walk"]),
                default=None,
            ),
            click.option("--order", type=int, default=None, help="Approximation order."),
        ]
    ):
        function = option(function)
    return function


# Sets up logging before the command and exits with the command's code.
def command(function: Callable[..., int]) -> Callable[..., int]:
    @wraps(function)
    def wrapper(*args: Any, verbose: bool, **kwargs: Any) -> int:
        _setup_logging(verbose)
        return function(*args, **kwargs)

    return wrapper


## Helpers.


def _setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose or "DEBUG" in os.environ else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _require_file(path: Optional[Path], flag: str) -> Path:
    if path is None:
        raise ParameterError(f"{flag} is required")
    if not path.is_file():
        raise DataError(f"{flag}: no such file {path}")
    return path


def _report(document: Any) -> None:
    click.echo(dumps(document))


def _output_dir(output_dir: Path) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def _pipeline_overrides(
    knn: Optional[int],
    bandwidth: Union[str, float, None],
    laplacian_kind: Optional[str],
    order: Optional[int],
    seed: int,
) -> Dict[str, Any]:
    return {
        "knn": knn,
        "bandwidth": bandwidth,
        "laplacian": laplacian_kind,
        "order": order,
        "seed": seed,
    }


## Commands.


@click.group(help="Heat-geodesic embeddings of point clouds.")
def cli() -> None:
    pass


@cli.command("generate", help="Write a synthetic dataset.")
@click.argument("dataset", type=click.Choice(DATASETS))
@common_options
@click.option("--n", type=int, default=None, help="Swiss roll size.")
@click.option("--noise", type=float, default=None, help="Noise sd.")
@click.option("--dim", type=int, default=None, help="Ambient dimension.")
@click.option("--clustered", is_flag=True, help="Swiss roll with two clusters.")
@click.option("--branch-length", type=int, default=None)
@click.option("--branches", type=int, default=None)
@click.option("--n-per-time", type=int, default=None)
@click.option("--n-times", type=int, default=None)
@click.option("--drift-step", type=float, default=None)
@click.option("--n-per-blob", type=int, default=None)
@click.option("--n-blobs", type=int, default=None)
@click.option("--separation", type=float, default=None)
@click.option("--stem", default=None, help="Output file prefix.")
@command
def cmd_generate(
    dataset: str,
    seed: int,
    output_dir: Path,
    config: Optional[Path],
    n: Optional[int],
    noise: Optional[float],
    dim: Optional[int],
    clustered: bool,
    branch_length: Optional[int],
    branches: Optional[int],
    n_per_time: Optional[int],
    n_times: Optional[int],
    drift_step: Optional[float],
    n_per_blob: Optional[int],
    n_blobs: Optional[int],
    separation: Optional[float],
    stem: Optional[str],
) -> int:
    flags = {
        "swiss-roll": {
            "n": n,
            "noise_sd": noise,
            "ambient_dim": dim,
            "clustered": clustered or None,
        },
        "tree": {
            "branch_len": branch_length,
            "n_branches": branches,
            "dim": dim,
            "noise_sd": noise,
        },
        "drift": {
            "n_per_time": n_per_time,
            "n_times": n_times,
            "dim": dim,
            "drift_step": drift_step,
        },
        "blobs": {
            "n_per_blob": n_per_blob,
            "n_blobs": n_blobs,
            "dim": dim,
            "separation": separation,
        },
    }[dataset]
    params: Dict[str, Any] = {}
    if config is not None:
        params.update(read_json(config))
    params.update({key: value for key, value in flags.items() if value is not None})

    bundle = generate(dataset, params, seed=seed)
    paths = bundle.write(_output_dir(output_dir), stem or dataset)
    _report({"dataset": dataset, "n": bundle.cloud.n, "files": paths})
    return EXIT_OK


@cli.command("embed", help="Embed a point cloud.")
@common_options
@pipeline_options
@click.option("--method", type=click.Choice(METHODS), default="heatgeo", show_default=True)
@click.option("--t", type=FloatOr("auto"), default=None, help="'auto' or a diffusion time.")
@click.option("--sigma", type=float, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--k", type=int, default=None, help="Embedding dimension.")
@click.option(
    "--approximation", type=click.Choice(["exact", "chebyshev", "euler"]), default=None
)
@click.option("--floor", type=float, default=None)
@click.option("--weighted", is_flag=True)
@click.option("--squared", is_flag=True)
@click.option("--max-iters", type=int, default=None)
@click.option("--save-kernel", type=click.Choice(["csv", "bin"]), default=None)
@click.option("--save-adjacency", is_flag=True)
@click.option("--stem", default=None, help="Output file prefix.")
@command
def cmd_embed(
    seed: int,
    output_dir: Path,
    config: Optional[Path],
    input_path: Path,
    knn: Optional[int],
    bandwidth: Union[str, float, None],
    laplacian_kind: Optional[str],
    order: Optional[int],
    method: str,
    t: Union[str, float, None],
    sigma: Optional[float],
    rho: Optional[float],
    k: Optional[int],
    approximation: Optional[str],
    floor: Optional[float],
    weighted: bool,
    squared: bool,
    max_iters: Optional[int],
    save_kernel: Optional[str],
    save_adjacency: bool,
    stem: Optional[str],
) -> int:
    input_path = _require_file(input_path, "--input")
    configuration = get_configuration(
        config,
        {
            **_pipeline_overrides(knn, bandwidth, laplacian_kind, order, seed),
            "t": t,
            "sigma": sigma,
            "rho": rho,
            "n_components": k,
            "approximation": approximation,
            "floor": floor,
            "weighted": weighted or None,
            "squared": squared or None,
            "max_iters": max_iters,
        },
    )
    cloud = load_csv(input_path)
    result = embed(cloud, method, configuration)
    estimate, embedding = result.estimate, result.embedding

    output_dir = _output_dir(output_dir)
    stem = stem or input_path.stem
    embedding_path = output_dir / f"{stem}_embedding.csv"
    distances_path = output_dir / f"{stem}_distances.csv"
    metadata_path = output_dir / f"{stem}_metadata.json"
    write_embedding_csv(embedding_path, embedding.coords, cloud.labels, cloud.timepoints)
    write_matrix_csv(distances_path, estimate.distances.matrix)
    files = [embedding_path, distances_path, metadata_path]

    if save_kernel is not None:
        if estimate.kernel is None:
            logger.warning(f"{method} has no diffusion kernel to save")
        elif save_kernel == "bin":
            kernel_path = output_dir / f"{stem}_kernel.bin"
            write_kernel_binary(kernel_path, estimate.kernel)
            files.append(kernel_path)
        else:
            kernel_path = output_dir / f"{stem}_kernel.csv"
            write_matrix_csv(kernel_path, estimate.kernel)
            files.append(kernel_path)
    if save_adjacency:
        adjacency_path = output_dir / f"{stem}_adjacency.csv"
        write_adjacency_csv(adjacency_path, estimate.graph.adjacency)
        files.append(adjacency_path)

    metadata = {
        "method": method,
        "input": input_path,
        "n": cloud.n,
        "configuration": configuration._asdict(),
        "t": estimate.time,
        "time_selection": (
            None if estimate.time_selection is None else asdict(estimate.time_selection)
        ),
        "sigma": configuration.sigma,
        "rho": configuration.rho,
        "order": configuration.order,
        "stress": embedding.stress,
        "iterations": len(embedding.trace) - 1,
        "converged": embedding.converged,
        "degenerate": embedding.degenerate,
        "floored": estimate.distances.floored,
        "clamped": estimate.distances.clamped,
        "entropy": estimate.entropy,
        "files": files,
    }
    write_json(metadata_path, metadata)
    _report(metadata)
    return EXIT_OK


# Labels from a CSV with a "label" column, or a single headerless column.
def _read_labels(path: Path) -> np.ndarray:
    header, rows = read_table(path)
    if header is not None:
        if LABEL_COLUMN not in header:
            raise DataError(f"{path}: no '{LABEL_COLUMN}' column")
        index = header.index(LABEL_COLUMN)
    elif len(rows[0][1]) == 1:
        index = 0
    else:
        raise DataError(f"{path}: expected a '{LABEL_COLUMN}' column or a single column")
    return np.array([parse_int(cells[index], line) for line, cells in rows], dtype=np.int64)


@cli.command("eval", help="Score distances or an embedding.")
@common_options
@click.option("--distances", type=click.Path(path_type=Path), default=None, help="Estimated distance CSV.")
@click.option("--reference", type=click.Path(path_type=Path), default=None, help="Reference distance CSV.")
@click.option("--embedding", type=click.Path(path_type=Path), default=None, help="Embedding CSV.")
@click.option(
    "--labels",
    type=click.Path(path_type=Path),
    default=None,
    help="CSV with a label column, or one column of labels.",
)
@click.option("--n-clusters", type=int, default=None)
@click.option("--held-out", type=int, default=None, help="Timepoint to interpolate.")
@click.option("--stem", default="eval", show_default=True, help="Output file prefix.")
@command
def cmd_eval(
    seed: int,
    output_dir: Path,
    config: Optional[Path],
    distances: Optional[Path],
    reference: Optional[Path],
    embedding: Optional[Path],
    labels: Optional[Path],
    n_clusters: Optional[int],
    held_out: Optional[int],
    stem: str,
) -> int:
    if distances is None and embedding is None:
        raise ParameterError("eval needs --distances and --reference, or --embedding")
    # Check every input before computing anything.
    if distances is not None or reference is not None:
        distances = _require_file(distances, "--distances")
        reference = _require_file(reference, "--reference")
    if embedding is not None:
        _require_file(embedding, "--embedding")
    if labels is not None:
        _require_file(labels, "--labels")
    if config is not None:
        logger.warning("eval ignores --config")

    scores: Dict[str, float] = {}
    report_config: Dict[str, Any] = {"seed": seed}

    if distances is not None and reference is not None:
        reference_matrix = DistanceMatrix(read_matrix_csv(reference), provenance="reference")
        estimate = DistanceMatrix(read_matrix_csv(distances), provenance="estimate")
        scores.update(evaluate_distances(reference_matrix, estimate))
        report_config.update(distances=distances, reference=reference)

    if embedding is not None:
        table = read_embedding_csv(embedding)
        report_config["embedding"] = embedding
        true_labels = _read_labels(labels) if labels is not None else table.labels
        if true_labels is not None:
            if true_labels.shape[0] != table.coords.shape[0]:
                raise ParameterError(
                    f"{true_labels.shape[0]} labels for {table.coords.shape[0]} embedded points"
                )
            clusters = n_clusters or int(np.unique(true_labels).size)
            scores.update(clustering_scores(table.coords, true_labels, clusters, seed=seed)._asdict())
            report_config["n_clusters"] = clusters
        if held_out is not None:
            if table.timepoints is None:
                raise DataError(f"{embedding}: --held-out needs a timepoint column")
            scores["emd"] = interpolation_emd(table.coords, table.timepoints, held_out, seed=seed)
            scores["emd_control"] = shuffled_interpolation_emd(
                table.coords, table.timepoints, held_out, seed=seed
            )
            report_config["held_out"] = held_out
        if true_labels is None and held_out is None:
            raise ParameterError("embedding evaluation needs labels or --held-out")

    report = EvalReport(**scores, config=report_config).to_json()
    write_json(_output_dir(output_dir) / f"{stem}_report.json", report)
    _report(report)
    return EXIT_OK


@cli.command("knee", help="Heat kernel entropy curve and its knee.")
@common_options
@pipeline_options
@click.option(
    "--grid",
    type=(float, float, int),
    default=None,
    metavar="START STOP COUNT",
    help="Log-spaced candidate times.",
)
@click.option("--sensitivity", type=float, default=None)
@click.option("--smoothing", type=float, default=None)
@click.option("--stem", default=None, help="Output file prefix.")
@command
def cmd_knee(
    seed: int,
    output_dir: Path,
    config: Optional[Path],
    input_path: Path,
    knn: Optional[int],
    bandwidth: Union[str, float, None],
    laplacian_kind: Optional[str],
    order: Optional[int],
    grid: Optional[Tuple[float, float, int]],
    sensitivity: Optional[float],
    smoothing: Optional[float],
    stem: Optional[str],
) -> int:
    input_path = _require_file(input_path, "--input")
    overrides: Dict[str, Any] = {
        **_pipeline_overrides(knn, bandwidth, laplacian_kind, order, seed),
        "knee_sensitivity": sensitivity,
        "knee_smoothing": smoothing,
    }
    if grid is not None:
        overrides["time_grid"] = tuple(grid)
    configuration = get_configuration(config, overrides)

    cloud = load_csv(input_path)
    graph = build_knn_graph(cloud, configuration.knn, configuration.bandwidth)
    selection = select_time_knee(
        laplacian(graph.adjacency, configuration.laplacian),
        log_time_grid(*configuration.time_grid),
        configuration.order,
        sensitivity=configuration.knee_sensitivity,
        smoothing=configuration.knee_smoothing,
    )

    entropy_path = _output_dir(output_dir) / f"{stem or input_path.stem}_entropy.csv"
    write_entropy_csv(entropy_path, selection.grid, selection.entropies)
    _report({"t": selection.chosen, "found_knee": selection.found_knee, "index": selection.index})
    return EXIT_OK


@cli.command("benchmark", help="Datasets x methods benchmark from a JSON spec given by --config.")
@common_options
@click.option("--workers", type=int, default=None)
@click.option("--stem", default="benchmark", show_default=True, help="Output file prefix.")
@command
def cmd_benchmark(
    seed: int,
    output_dir: Path,
    config: Optional[Path],
    workers: Optional[int],
    stem: str,
) -> int:
    spec = get_benchmark_spec(_require_file(config, "--config"))
    if workers is not None:
        if workers < 1:
            raise ParameterError(f"--workers must be positive, got {workers}")
        spec = spec._replace(workers=workers)

    result = run_benchmark(spec, seed=seed)
    paths = write_benchmark(result, _output_dir(output_dir), stem)
    _report({"rows": result.rows, "sweep": result.sweep, "files": paths})
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        code = cli.main(
            args=None if argv is None else list(argv),
            prog_name="heatgeo",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except (ParameterError, DataError, OSError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"numerical failure in {e.stage}: {e}")
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as e:
        logger.error(f"numerical failure in linear algebra: {e}")
        return EXIT_NUMERICAL
    return code if isinstance(code, int) else EXIT_OK
