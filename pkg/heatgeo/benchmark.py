from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .configuration import BenchmarkSpec, Configuration, configuration_from_dict
from .datasets import generate
from .io import write_json
from .methods import embed, estimate_distances
from .metrics import clustering_scores, evaluate_distances
from .types import Method

logger = getLogger(__name__)

# Columns of the results table, each reported as mean and standard deviation.
METRICS = (
    "pearson",
    "spearman",
    "frob_norm",
    "max_norm",
    "homogeneity",
    "ami",
    "ari",
)

# Score used to pick hyperparameters on the validation seeds, in order of preference.
SELECTION_METRICS = ("pearson", "homogeneity")


class Task(NamedTuple):
    dataset: Dict[str, Any]
    method: Method
    # Full configuration as a plain dict, which pickles cheaply.
    configuration: Dict[str, Any]
    seed: int
    cluster: bool = True
    # Distances only, no embedding.
    distances_only: bool = False


class TaskResult(NamedTuple):
    scores: Dict[str, float]
    error: Optional[str] = None


class BenchmarkResult(NamedTuple):
    rows: List[Dict[str, Any]]
    # Set for sweeps, None otherwise.
    sweep: Optional[Dict[str, Any]] = None


def dataset_label(entry: Dict[str, Any]) -> str:
    params = entry.get("params") or {}
    if not params:
        return entry["name"]
    arguments = ",".join(f"{key}={params[key]}" for key in sorted(params))
    return f"{entry['name']}({arguments})"


def candidate_overrides(grid: Optional[Dict[str, List[Any]]]) -> List[Dict[str, Any]]:
    if not grid:
        return [{}]
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


# Runs in worker processes, so everything it needs comes in through the task.
def run_task(task: Task) -> TaskResult:
    try:
        bundle = generate(task.dataset["name"], task.dataset.get("params"), seed=task.seed)
        configuration = Configuration(**task.configuration)._replace(seed=task.seed)
        scores: Dict[str, float] = {}

        if task.distances_only:
            estimate = estimate_distances(bundle.cloud, task.method, configuration)
        else:
            result = embed(bundle.cloud, task.method, configuration)
            estimate = result.estimate
            labels = bundle.cloud.labels
            if task.cluster and labels is not None and np.unique(labels).size >= 2:
                clusters = clustering_scores(
                    result.embedding, labels, int(np.unique(labels).size), seed=task.seed
                )
                scores.update(clusters._asdict())

        if bundle.geodesics is not None:
            scores.update(evaluate_distances(bundle.geodesics, estimate.distances))
        if estimate.entropy is not None:
            scores["entropy"] = estimate.entropy
        if estimate.time is not None:
            scores["t"] = estimate.time
        return TaskResult(scores)
    except Exception as e:
        logger.debug(f"{task.method} on {dataset_label(task.dataset)} with seed {task.seed} failed: {e!r}")
        return TaskResult({}, f"{type(e).__name__}: {e}")


def run_tasks(tasks: Sequence[Task], workers: int = 1) -> List[TaskResult]:
    if workers <= 1 or len(tasks) <= 1:
        return [run_task(task) for task in tasks]
    # `map` yields in submission order, whatever order the cells finish in.
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run_task, tasks, chunksize=1))


def _mean_sd(values: Sequence[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"mean": None, "sd": None}
    array = np.asarray(values, dtype=np.float64)
    sd = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return {"mean": float(array.mean()), "sd": sd}


def summarize(results: Iterable[TaskResult], metrics: Sequence[str] = METRICS) -> Dict[str, Any]:
    results = list(results)
    summary: Dict[str, Any] = {}
    for metric in metrics:
        values = [r.scores[metric] for r in results if r.error is None and metric in r.scores]
        stats = _mean_sd(values)
        summary[f"{metric}_mean"] = stats["mean"]
        summary[f"{metric}_sd"] = stats["sd"]
    return summary


def _selection_score(results: Sequence[TaskResult]) -> float:
    for metric in SELECTION_METRICS:
        values = [r.scores[metric] for r in results if r.error is None and metric in r.scores]
        if values:
            return float(np.mean(values))
    return -np.inf


def split_seeds(seed: int, repetitions: int) -> Tuple[List[int], List[int]]:
    validation = [seed + i for i in range(repetitions)]
    test = [seed + repetitions + i for i in range(repetitions)]
    return validation, test


def _base_configuration(spec: BenchmarkSpec) -> Configuration:
    return configuration_from_dict(spec.configuration, Configuration())


def run_benchmark(spec: BenchmarkSpec, seed: int = 0) -> BenchmarkResult:
    if spec.sweep is not None:
        return run_sweep(spec, seed)

    base = _base_configuration(spec)
    validation, test = split_seeds(seed, spec.repetitions)
    cells = [(dataset, method) for dataset in spec.datasets for method in spec.methods]

    # Validation: every cell x candidate x validation seed.
    candidates = {
        (i, method): [
            configuration_from_dict(overrides, base)
            for overrides in candidate_overrides(spec.grid.get(method))
        ]
        for i, (_, method) in enumerate(cells)
    }
    validation_tasks: List[Task] = []
    index: List[Tuple[int, int]] = []
    for i, (dataset, method) in enumerate(cells):
        configurations = candidates[(i, method)]
        if len(configurations) == 1:
            continue
        for c, configuration in enumerate(configurations):
            for s in validation:
                validation_tasks.append(
                    Task(dataset, method, configuration._asdict(), s, spec.cluster)
                )
                index.append((i, c))
    logger.info(f"benchmark validation: {len(validation_tasks)} runs")
    validation_results = run_tasks(validation_tasks, spec.workers)

    chosen: Dict[int, int] = {}
    for i in range(len(cells)):
        configurations = candidates[(i, cells[i][1])]
        if len(configurations) == 1:
            chosen[i] = 0
            continue
        scores = [
            _selection_score(
                [r for (cell, c), r in zip(index, validation_results) if cell == i and c == k]
            )
            for k in range(len(configurations))
        ]
        chosen[i] = int(np.argmax(scores))

    # Test: the chosen configuration of every cell on the held-out seeds.
    test_tasks = [
        Task(dataset, method, candidates[(i, method)][chosen[i]]._asdict(), s, spec.cluster)
        for i, (dataset, method) in enumerate(cells)
        for s in test
    ]
    logger.info(f"benchmark test: {len(test_tasks)} runs")
    test_results = run_tasks(test_tasks, spec.workers)

    rows = []
    for i, (dataset, method) in enumerate(cells):
        results = test_results[i * len(test) : (i + 1) * len(test)]
        failures = [r.error for r in results if r.error is not None]
        for failure in failures:
            logger.warning(f"{dataset_label(dataset)} / {method} failed: {failure}")
        overrides = candidate_overrides(spec.grid.get(method))[chosen[i]]
        rows.append(
            {
                "dataset": dataset_label(dataset),
                "method": method,
                "params": json.dumps(overrides, sort_keys=True),
                "runs": len(results) - len(failures),
                "failures": len(failures),
                **summarize(results),
                "errors": failures,
            }
        )
    return BenchmarkResult(rows)


def _sweep_value(parameter: str, value: Any) -> Any:
    if parameter in ("order", "knn"):
        return int(value)
    if parameter == "t" and value != "auto":
        return float(value)
    return value


# Every method across the values of one hyperparameter, on the test seeds. Rows hold
# the mean of each metric over the seeds.
def run_sweep(spec: BenchmarkSpec, seed: int = 0) -> BenchmarkResult:
    assert spec.sweep is not None
    parameter = spec.sweep["parameter"]
    values = [_sweep_value(parameter, v) for v in spec.sweep["values"]]
    base = _base_configuration(spec)
    _, test = split_seeds(seed, spec.repetitions)

    keys = []
    tasks = []
    for dataset in spec.datasets:
        for method in spec.methods:
            for value in values:
                configuration = configuration_from_dict({parameter: value}, base)
                keys.append((dataset, method, value))
                tasks.extend(
                    Task(dataset, method, configuration._asdict(), s, False, distances_only=True)
                    for s in test
                )
    logger.info(f"benchmark sweep over {parameter}: {len(tasks)} runs")
    results = run_tasks(tasks, spec.workers)

    rows = []
    for k, (dataset, method, value) in enumerate(keys):
        chunk = results[k * len(test) : (k + 1) * len(test)]
        summary = summarize(chunk, ("pearson", "frob_norm", "entropy"))
        rows.append(
            {
                "dataset": dataset_label(dataset),
                "method": method,
                "parameter": parameter,
                "value": value,
                "pearson": summary["pearson_mean"],
                "frobenius": summary["frob_norm_mean"],
                "entropy": summary["entropy_mean"],
                "failures": sum(r.error is not None for r in chunk),
            }
        )
    return BenchmarkResult(rows, sweep={"parameter": parameter, "values": values})


def write_benchmark(result: BenchmarkResult, output_dir: Path, stem: str = "benchmark") -> List[Path]:
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = output_dir / f"{stem}.csv"
    json_path = output_dir / f"{stem}.json"

    columns = [c for c in (result.rows[0].keys() if result.rows else []) if c != "errors"]
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in result.rows:
            writer.writerow({key: "" if value is None else value for key, value in row.items()})

    write_json(json_path, {"rows": result.rows, "sweep": result.sweep})
    logger.info(f"wrote benchmark tables to {csv_path} and {json_path}")
    return [csv_path, json_path]
