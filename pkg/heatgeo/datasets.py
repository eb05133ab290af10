from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import ortho_group

from .distance import GROUND_TRUTH, DistanceMatrix
from .errors import DataError, ParameterError
from .graph import PointCloud
from .io import (
    LABEL_COLUMN,
    TIMEPOINT_COLUMN,
    parse_float,
    parse_int,
    read_table,
    write_cloud_csv,
    write_json,
    write_matrix_csv,
)
from .types import Dataset, FloatArray

logger = getLogger(__name__)

# Swiss roll parameter range [T0, T1] x [0, W].
SWISS_ROLL_T0 = 1.5 * np.pi
SWISS_ROLL_T1 = 4.5 * np.pi
SWISS_ROLL_WIDTH = 5.0

# Mixture components of the clustered Swiss roll, in the (t, h) plane.
SWISS_ROLL_CLUSTER_MEANS = ((7.0, SWISS_ROLL_WIDTH / 2), (12.0, SWISS_ROLL_WIDTH / 2))
SWISS_ROLL_CLUSTER_SD = 1.0

# Per-coordinate standard deviation of one Brownian step on the tree.
TREE_STEP_SD = 2.0


@dataclass(frozen=True)
class GroundTruthBundle:
    cloud: PointCloud
    # None for generators without a known geodesic distance.
    geodesics: Optional[DistanceMatrix]
    # Generator name, seed and arguments.
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.geodesics is not None and self.geodesics.n != self.cloud.n:
            raise ParameterError(
                f"{self.geodesics.n} x {self.geodesics.n} geodesics for {self.cloud.n} points"
            )

    # Writes <stem>_cloud.csv, <stem>_geodesics.csv when known, and <stem>_params.json.
    def write(self, output_dir: Path, stem: str) -> List[Path]:
        output_dir.mkdir(parents=True, exist_ok=True)
        cloud_path = output_dir / f"{stem}_cloud.csv"
        write_cloud_csv(cloud_path, self.cloud)
        paths = [cloud_path]
        if self.geodesics is not None:
            geodesics_path = output_dir / f"{stem}_geodesics.csv"
            write_matrix_csv(geodesics_path, self.geodesics.matrix)
            paths.append(geodesics_path)
        params_path = output_dir / f"{stem}_params.json"
        write_json(params_path, self.params)
        paths.append(params_path)
        logger.info(f"wrote {self.cloud.n} points to {cloud_path}")
        return paths


# Independent Philox streams for the separate random choices of one generator, so that
# e.g. changing the noise level leaves the sampled manifold points unchanged.
def rng_streams(seed: int, count: int) -> List[np.random.Generator]:
    return [
        np.random.Generator(np.random.Philox(child))
        for child in np.random.SeedSequence(seed).spawn(count)
    ]


# s(t) = integral_0^t sqrt(1 + u^2) du, the arc length of the spiral (u cos u, u sin u).
def swiss_roll_arc_length(t: Union[float, FloatArray]) -> Union[float, FloatArray]:
    t = np.asarray(t, dtype=np.float64)
    result = 0.5 * (t * np.sqrt(1.0 + t**2) + np.arcsinh(t))
    return float(result) if result.ndim == 0 else result


def swiss_roll_surface(t: FloatArray, h: FloatArray) -> FloatArray:
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return np.column_stack([t * np.cos(t), h, t * np.sin(t)])


def swiss_roll(
    n: int,
    noise_sd: float = 0.0,
    ambient_dim: int = 3,
    clustered: bool = False,
    seed: int = 0,
) -> GroundTruthBundle:
    if n < 10:
        raise ParameterError(f"Swiss roll needs at least 10 points, got {n}")
    if ambient_dim < 3:
        raise ParameterError(f"Swiss roll needs an ambient dimension of at least 3, got {ambient_dim}")
    if not noise_sd >= 0:
        raise ParameterError(f"noise_sd must be nonnegative, got {noise_sd}")
    sample_rng, rotation_rng, noise_rng = rng_streams(seed, 3)

    labels = None
    if clustered:
        labels = sample_rng.integers(0, len(SWISS_ROLL_CLUSTER_MEANS), size=n)
        means = np.array(SWISS_ROLL_CLUSTER_MEANS)[labels]
        plane = means + sample_rng.normal(0.0, SWISS_ROLL_CLUSTER_SD, size=(n, 2))
        t, h = plane[:, 0], plane[:, 1]
    else:
        t = sample_rng.uniform(SWISS_ROLL_T0, SWISS_ROLL_T1, size=n)
        h = sample_rng.uniform(0.0, SWISS_ROLL_WIDTH, size=n)

    data = swiss_roll_surface(t, h)
    if ambient_dim > 3:
        padded = np.zeros((n, ambient_dim))
        padded[:, :3] = data
        rotation = ortho_group.rvs(ambient_dim, random_state=rotation_rng)
        data = padded @ rotation
    if noise_sd > 0:
        data = data + noise_rng.normal(0.0, noise_sd, size=data.shape)

    # The surface is developable: unrolled, it's the flat (s(t), h) rectangle.
    unrolled = np.column_stack([swiss_roll_arc_length(t), h])
    geodesics = DistanceMatrix(
        matrix=squareform(pdist(unrolled)),
        provenance=GROUND_TRUTH,
        params={"dataset": "swiss-roll"},
    )
    logger.debug(f"sampled Swiss roll with {n} points in {ambient_dim} dimensions")
    return GroundTruthBundle(
        cloud=PointCloud(data=data, labels=labels),
        geodesics=geodesics,
        params={
            "dataset": "swiss-roll",
            "n": n,
            "noise_sd": noise_sd,
            "ambient_dim": ambient_dim,
            "clustered": clustered,
            "seed": seed,
        },
    )


# Distances along a tree of glued Brownian paths. `cumulative[p]` is the length walked
# from the start of p's branch, `anchor[p]` the length along branch 0 to where p's branch
# is glued (p's own position for branch 0 points).
def _tree_geodesics(
    branch: np.ndarray, cumulative: FloatArray, anchor: FloatArray
) -> FloatArray:
    same = branch[:, None] == branch[None, :]
    offset = np.where(branch == 0, 0.0, cumulative)
    within = np.abs(cumulative[:, None] - cumulative[None, :])
    across = offset[:, None] + offset[None, :] + np.abs(anchor[:, None] - anchor[None, :])
    return np.where(same, within, across)


def tree(
    branch_len: int = 500,
    n_branches: int = 5,
    dim: int = 5,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> GroundTruthBundle:
    if branch_len < 2:
        raise ParameterError(f"branch_len must be at least 2, got {branch_len}")
    if n_branches < 2:
        raise ParameterError(f"n_branches must be at least 2, got {n_branches}")
    if dim < 1:
        raise ParameterError(f"dim must be positive, got {dim}")
    if not noise_sd >= 0:
        raise ParameterError(f"noise_sd must be nonnegative, got {noise_sd}")
    walk_rng, glue_rng, noise_rng = rng_streams(seed, 3)

    # Sampled at integer times 0..L-1, each starting at the origin.
    steps = walk_rng.normal(0.0, TREE_STEP_SD, size=(n_branches, branch_len - 1, dim))
    paths = np.concatenate([np.zeros((n_branches, 1, dim)), np.cumsum(steps, axis=1)], axis=1)
    step_lengths = np.linalg.norm(steps, axis=2)
    lengths = np.concatenate([np.zeros((n_branches, 1)), np.cumsum(step_lengths, axis=1)], axis=1)

    glue = np.zeros(n_branches, dtype=np.int64)
    glue[1:] = glue_rng.integers(0, branch_len, size=n_branches - 1)
    for b in range(1, n_branches):
        paths[b] += paths[0, glue[b]]

    branch = np.repeat(np.arange(n_branches), branch_len)
    cumulative = lengths.ravel()
    anchor = np.where(branch == 0, cumulative, lengths[0, glue[branch]])
    geodesics = _tree_geodesics(branch, cumulative, anchor)

    data = paths.reshape(n_branches * branch_len, dim)
    if noise_sd > 0:
        data = data + noise_rng.normal(0.0, noise_sd, size=data.shape)

    logger.debug(f"sampled tree with {n_branches} branches of {branch_len} points, glued at {glue[1:].tolist()}")
    return GroundTruthBundle(
        cloud=PointCloud(data=data, labels=branch),
        geodesics=DistanceMatrix(matrix=geodesics, provenance=GROUND_TRUTH, params={"dataset": "tree"}),
        params={
            "dataset": "tree",
            "branch_len": branch_len,
            "n_branches": n_branches,
            "dim": dim,
            "noise_sd": noise_sd,
            "seed": seed,
            "glue_points": glue[1:].tolist(),
        },
    )


# One isotropic unit Gaussian per time, the mean moving by `drift_step` along the first
# axis between consecutive times.
def timepoint_drift(
    n_per_time: int,
    n_times: int = 3,
    dim: int = 10,
    drift_step: float = 2.0,
    seed: int = 0,
) -> PointCloud:
    if n_times < 3:
        raise ParameterError(f"drift needs at least 3 timepoints, got {n_times}")
    if n_per_time < 1:
        raise ParameterError(f"n_per_time must be positive, got {n_per_time}")
    if dim < 1:
        raise ParameterError(f"dim must be positive, got {dim}")
    (rng,) = rng_streams(seed, 1)

    timepoints = np.repeat(np.arange(n_times), n_per_time)
    means = np.zeros((n_times, dim))
    means[:, 0] = drift_step * np.arange(n_times)
    data = means[timepoints] + rng.normal(0.0, 1.0, size=(timepoints.size, dim))
    return PointCloud(data=data, timepoints=timepoints)


# Isotropic unit Gaussians centered at `separation` times distinct coordinate axes.
def gaussian_blobs(
    n_per_blob: int,
    n_blobs: int = 4,
    dim: int = 10,
    separation: float = 10.0,
    seed: int = 0,
) -> PointCloud:
    if n_blobs < 2 or n_blobs > dim:
        raise ParameterError(f"n_blobs must be between 2 and dim={dim}, got {n_blobs}")
    if n_per_blob < 1:
        raise ParameterError(f"n_per_blob must be positive, got {n_per_blob}")
    (rng,) = rng_streams(seed, 1)

    labels = np.repeat(np.arange(n_blobs), n_per_blob)
    means = separation * np.eye(dim)[:n_blobs]
    data = means[labels] + rng.normal(0.0, 1.0, size=(labels.size, dim))
    return PointCloud(data=data, labels=labels)


# Dispatch by dataset name, e.g. for the CLI and benchmarks. Parameters use the
# generators' argument names.
def generate(name: Dataset, params: Optional[Mapping[str, Any]] = None, seed: int = 0) -> GroundTruthBundle:
    params = dict(params or {})
    try:
        if name == "swiss-roll":
            return swiss_roll(seed=seed, **{"n": 500, **params})
        elif name == "tree":
            return tree(seed=seed, **params)
        elif name == "drift":
            cloud = timepoint_drift(seed=seed, **{"n_per_time": 200, **params})
        elif name == "blobs":
            cloud = gaussian_blobs(seed=seed, **{"n_per_blob": 100, **params})
        else:
            raise ParameterError(f"unknown dataset: {name}")
    except TypeError as e:
        raise ParameterError(f"bad parameters for {name}: {e}") from e
    return GroundTruthBundle(cloud=cloud, geodesics=None, params={"dataset": name, "seed": seed, **params})


# Numeric CSV with an optional header. Columns named "label" and "timepoint" are parsed
# as integer tags rather than coordinates.
def load_csv(path: Union[str, Path]) -> PointCloud:
    header, rows = read_table(path)
    width = len(rows[0][1])
    names = header if header is not None else [f"x_{i + 1}" for i in range(width)]

    label_index = names.index(LABEL_COLUMN) if LABEL_COLUMN in names else None
    timepoint_index = names.index(TIMEPOINT_COLUMN) if TIMEPOINT_COLUMN in names else None
    data_columns = [i for i in range(width) if i not in (label_index, timepoint_index)]
    if not data_columns:
        raise DataError(f"{path} has no coordinate columns")

    data = np.array(
        [[parse_float(cells[i], line) for i in data_columns] for line, cells in rows],
        dtype=np.float64,
    )
    bad = np.flatnonzero(~np.all(np.isfinite(data), axis=1))
    if bad.size:
        raise DataError("non-finite coordinate", rows[int(bad[0])][0])

    def tags(index: Optional[int]) -> Optional[np.ndarray]:
        if index is None:
            return None
        return np.array([parse_int(cells[index], line) for line, cells in rows], dtype=np.int64)

    logger.info(f"loaded {data.shape[0]} points in {data.shape[1]} dimensions from {path}")
    return PointCloud(data=data, labels=tags(label_index), timepoints=tags(timepoint_index))
