from __future__ import annotations

from logging import getLogger
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

from .errors import DataError, ParameterError
from .io import read_json
from .types import (
    Approximation,
    Bandwidth,
    Dataset,
    DiffusionTime,
    LaplacianKind,
    Method,
)

logger = getLogger(__name__)

Numeric = Union[int, float]

# Top-level key of a configuration file which discards the defaults instead of merging
# onto them, e.g.
#
#   {"replace": true, "knn": 5, "t": 2.0}
#
# leaves every other field at its built-in default but ignores any previously layered
# values.
REPLACE_KEY = "replace"

METHODS: Tuple[Method, ...] = (
    "heatgeo",
    "phate-potential",
    "phate",
    "rand-geo",
    "diffusion-map",
    "shortest-path",
)

DATASETS: Tuple[Dataset, ...] = ("swiss-roll", "tree", "drift", "blobs")

# Hyperparameters which can be swept in a benchmark.
SWEEP_PARAMETERS = ("t", "order", "knn", "sigma", "rho")


# Pipeline hyperparameters. Defaults follow the usual HeatGeo settings, e.g. an
# approximation order of 30 and a Harnack regularization of 1. To customize, pass a JSON
# file with `--config`:
#
#   {"knn": 15, "t": 5.0, "rho": 0.5}
#
# or override individual fields from the command line. See `types.py` for the possible
# values of `laplacian`, `approximation`, etc.
class Configuration(NamedTuple):
    # Number of neighbors in the k-NN graph.
    knn: int = 10

    # Fixed Gaussian kernel bandwidth, or "adaptive" to use the product of each
    # endpoint's k-th neighbor distance.
    bandwidth: Bandwidth = "adaptive"

    laplacian: LaplacianKind = "symmetric_normalized"

    # How to compute the heat kernel.
    approximation: Approximation = "chebyshev"

    # Chebyshev polynomial order, or number of backward Euler steps.
    order: int = 30

    # Diffusion time, or "auto" to pick the knee of the heat kernel entropy curve.
    t: DiffusionTime = "auto"

    # Candidate times for "auto": (start, stop, count), log-spaced.
    time_grid: Tuple[Numeric, Numeric, int] = (0.05, 200.0, 20)

    # Harnack volume correction strength. 0 disables the correction.
    sigma: float = 1.0

    # Triplet interpolation weight. 0 keeps the heat-geodesic dissimilarity, 1 uses only
    # the triplet distance.
    rho: float = 0.0

    # Logs of kernel entries below this are compressed toward log(floor).
    floor: float = 1e-12

    # Use -4t log H without the square root.
    squared: bool = False

    # Embedding dimension.
    n_components: int = 2

    # Weight the MDS stress by the heat kernel.
    weighted: bool = False

    max_iters: int = 300
    rel_tol: float = 1e-6

    seed: int = 0

    # Kneedle sensitivity and spline smoothing factor for "auto".
    knee_sensitivity: float = 1.0
    knee_smoothing: float = 0.0


# Datasets x methods x repetitions, plus the hyperparameter search. For example:
#
#   {
#       "datasets": [{"name": "swiss-roll", "params": {"n": 500, "noise_sd": 0.1}}],
#       "methods": ["heatgeo", "phate-potential"],
#       "repetitions": 5,
#       "grid": {"heatgeo": {"t": [1, 5, 10], "rho": [0, 0.5]}},
#       "workers": 4
#   }
#
# With a `sweep`, e.g. {"parameter": "t", "values": [0.1, 1, 10]}, every method is
# evaluated across the values instead of being tuned.
class BenchmarkSpec(NamedTuple):
    datasets: Tuple[Dict[str, Any], ...]
    methods: Tuple[Method, ...]

    # Seeds per split. Hyperparameters are chosen on the validation seeds, and scores
    # are reported on the same number of disjoint test seeds.
    repetitions: int = 5

    # Candidate values per method, as {method: {parameter: [values]}}.
    grid: Dict[str, Dict[str, List[Any]]] = {}

    # {"parameter": ..., "values": [...]}, or None for a regular run.
    sweep: Optional[Dict[str, Any]] = None

    # Cluster the embeddings when the dataset has labels.
    cluster: bool = True

    # Worker processes. 1 runs everything in the current process.
    workers: int = 1

    # Base configuration for all cells, merged onto the defaults.
    configuration: Dict[str, Any] = {}


def _unknown_keys(values: Mapping[str, Any], fields: Tuple[str, ...]) -> List[str]:
    return sorted(key for key in values if key not in fields)


def _normalize(values: Dict[str, Any]) -> Dict[str, Any]:
    # JSON has no tuples.
    if "time_grid" in values and values["time_grid"] is not None:
        values["time_grid"] = tuple(values["time_grid"])
    return values


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    document = read_json(path)
    if not isinstance(document, dict):
        raise DataError(f"{path}: expected a JSON object at the top level")
    return document


def configuration_from_dict(
    values: Mapping[str, Any], base: Optional[Configuration] = None
) -> Configuration:
    values = dict(values)
    replace = bool(values.pop(REPLACE_KEY, False))
    unknown = _unknown_keys(values, Configuration._fields)
    if unknown:
        raise ParameterError(f"unknown configuration keys: {', '.join(unknown)}")

    attrs = {} if replace or base is None else base._asdict()
    attrs.update(_normalize(values))
    # Parsed JSON isn't checked against the field types here, `validate_configuration`
    # covers the values that matter.
    return validate_configuration(Configuration(**attrs))


def get_configuration(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Configuration:
    configuration = Configuration()
    if path is not None:
        configuration = configuration_from_dict(_read_json(path), configuration)
        logger.info(f"loaded configuration from {path}")
    else:
        logger.info("loaded default configuration")

    # Flags win over the file. Unset flags come through as None.
    if overrides:
        present = {key: value for key, value in overrides.items() if value is not None}
        if present:
            configuration = configuration_from_dict(present, configuration)

    logger.info(f"using configuration: {configuration._asdict()}")
    return configuration


def validate_configuration(configuration: Configuration) -> Configuration:
    c = configuration
    if int(c.knn) != c.knn or c.knn < 1:
        raise ParameterError(f"knn must be a positive integer, got {c.knn}")
    if c.bandwidth != "adaptive" and not (
        isinstance(c.bandwidth, (int, float)) and c.bandwidth > 0
    ):
        raise ParameterError(f"bandwidth must be positive or 'adaptive', got {c.bandwidth}")
    if c.laplacian not in ("combinatorial", "symmetric_normalized", "random_walk"):
        raise ParameterError(f"unknown Laplacian kind: {c.laplacian}")
    if c.approximation not in ("exact", "chebyshev", "euler"):
        raise ParameterError(f"unknown heat kernel approximation: {c.approximation}")
    if int(c.order) != c.order or c.order < 1:
        raise ParameterError(f"order must be a positive integer, got {c.order}")
    if c.t != "auto" and not (isinstance(c.t, (int, float)) and c.t > 0):
        raise ParameterError(f"t must be positive or 'auto', got {c.t}")
    if len(c.time_grid) != 3:
        raise ParameterError(f"time_grid must be (start, stop, count), got {c.time_grid}")
    if not c.sigma >= 0:
        raise ParameterError(f"sigma must be nonnegative, got {c.sigma}")
    if not 0 <= c.rho <= 1:
        raise ParameterError(f"rho must be in [0, 1], got {c.rho}")
    if not c.floor > 0:
        raise ParameterError(f"floor must be positive, got {c.floor}")
    if int(c.n_components) != c.n_components or c.n_components < 1:
        raise ParameterError(f"n_components must be a positive integer, got {c.n_components}")
    if c.max_iters < 1 or not c.rel_tol > 0:
        raise ParameterError("max_iters and rel_tol must be positive")
    return configuration


def benchmark_spec_from_dict(values: Mapping[str, Any]) -> BenchmarkSpec:
    values = dict(values)
    unknown = _unknown_keys(values, BenchmarkSpec._fields)
    if unknown:
        raise ParameterError(f"unknown benchmark keys: {', '.join(unknown)}")

    datasets = []
    for entry in values.get("datasets", []):
        if isinstance(entry, str):
            entry = {"name": entry}
        if entry.get("name") not in DATASETS:
            raise ParameterError(f"unknown dataset: {entry.get('name')}")
        datasets.append({"name": entry["name"], "params": dict(entry.get("params", {}))})
    methods = tuple(values.get("methods", ()))
    if not datasets:
        raise ParameterError("benchmark needs at least one dataset")
    if not methods:
        raise ParameterError("benchmark needs at least one method")
    for method in methods:
        if method not in METHODS:
            raise ParameterError(f"unknown method: {method}")

    repetitions = int(values.get("repetitions", 5))
    if repetitions < 1:
        raise ParameterError(f"repetitions must be positive, got {repetitions}")
    workers = int(values.get("workers", 1))
    if workers < 1:
        raise ParameterError(f"workers must be positive, got {workers}")

    grid = {str(m): dict(g) for m, g in values.get("grid", {}).items()}
    for method, parameters in grid.items():
        if method not in METHODS:
            raise ParameterError(f"grid for unknown method: {method}")
        bad = _unknown_keys(parameters, Configuration._fields)
        if bad:
            raise ParameterError(f"grid for {method} has unknown keys: {', '.join(bad)}")

    sweep = values.get("sweep")
    if sweep is not None:
        if sweep.get("parameter") not in SWEEP_PARAMETERS:
            raise ParameterError(
                f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}, got {sweep.get('parameter')}"
            )
        if not sweep.get("values"):
            raise ParameterError("sweep needs at least one value")

    configuration = dict(values.get("configuration", {}))
    # Fail early on bad base values.
    configuration_from_dict(configuration, Configuration())

    return BenchmarkSpec(
        datasets=tuple(datasets),
        methods=methods,  # type: ignore
        repetitions=repetitions,
        grid=grid,
        sweep=sweep,
        cluster=bool(values.get("cluster", True)),
        workers=workers,
        configuration=configuration,
    )


def get_benchmark_spec(path: Union[str, Path]) -> BenchmarkSpec:
    spec = benchmark_spec_from_dict(_read_json(path))
    logger.info(
        f"loaded benchmark from {path}: {len(spec.datasets)} datasets, {len(spec.methods)} methods, {spec.repetitions} repetitions"
    )
    return spec
