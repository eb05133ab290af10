from __future__ import annotations

import csv
import json
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .graph import PointCloud
from .types import FloatArray, IntArray

logger = getLogger(__name__)

PathLike = Union[str, Path]

# Header of the raw kernel format: one little-endian uint64 holding n, followed by n * n
# little-endian float64 values in row-major order.
BINARY_HEADER = np.dtype("<u8")
BINARY_VALUES = np.dtype("<f8")

# Enough digits to round-trip any float64.
FLOAT_FORMAT = "%.17g"

LABEL_COLUMN = "label"
TIMEPOINT_COLUMN = "timepoint"
INDEX_COLUMN = "index"


class EmbeddingTable(NamedTuple):
    coords: FloatArray
    labels: Optional[IntArray]
    timepoints: Optional[IntArray]


# Yields (line number, cells) for every non-blank row.
def _rows(path: PathLike) -> Iterator[Tuple[int, List[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        for number, row in enumerate(csv.reader(f), start=1):
            cells = [cell.strip() for cell in row]
            if any(cells):
                yield number, cells


def parse_float(cell: str, line: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r}", line) from None


def parse_int(cell: str, line: int) -> int:
    value = parse_float(cell, line)
    if not value.is_integer():
        raise DataError(f"expected an integer, got {cell!r}", line)
    return int(value)


def _is_header(cells: Sequence[str]) -> bool:
    for cell in cells:
        try:
            float(cell)
        except ValueError:
            return True
    return False


# Rectangular numeric table, optionally with a header row naming the columns.
def read_table(path: PathLike) -> Tuple[Optional[List[str]], List[Tuple[int, List[str]]]]:
    rows = list(_rows(path))
    if not rows:
        raise DataError(f"{path} is empty")
    header: Optional[List[str]] = None
    if _is_header(rows[0][1]):
        header = [cell.lower() for cell in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path} has a header but no data rows")

    width = len(header) if header is not None else len(rows[0][1])
    for line, cells in rows:
        if len(cells) != width:
            raise DataError(f"expected {width} columns, got {len(cells)}", line)
    return header, rows


def read_matrix_csv(path: PathLike) -> FloatArray:
    header, rows = read_table(path)
    if header is not None:
        raise DataError(f"{path}: matrix files have no header", rows[0][0] - 1)
    return np.array(
        [[parse_float(cell, line) for cell in cells] for line, cells in rows],
        dtype=np.float64,
    )


def write_matrix_csv(path: PathLike, matrix: FloatArray) -> None:
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt=FLOAT_FORMAT)
    logger.debug(f"wrote {np.shape(matrix)} matrix to {path}")


def write_kernel_binary(path: PathLike, matrix: FloatArray) -> None:
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise DataError(f"kernel must be square, got shape {matrix.shape}")
    with open(path, "wb") as f:
        f.write(np.array([n], dtype=BINARY_HEADER).tobytes())
        f.write(np.ascontiguousarray(matrix, dtype=BINARY_VALUES).tobytes())


def read_kernel_binary(path: PathLike) -> FloatArray:
    data = Path(path).read_bytes()
    if len(data) < BINARY_HEADER.itemsize:
        raise DataError(f"{path} is too short for a kernel header")
    n = int(np.frombuffer(data[: BINARY_HEADER.itemsize], dtype=BINARY_HEADER)[0])
    expected = BINARY_HEADER.itemsize + n * n * BINARY_VALUES.itemsize
    if len(data) != expected:
        raise DataError(f"{path} has {len(data)} bytes, expected {expected} for n={n}")
    values = np.frombuffer(data[BINARY_HEADER.itemsize :], dtype=BINARY_VALUES)
    return values.astype(np.float64).reshape(n, n)


def write_entropy_csv(path: PathLike, grid: Sequence[float], entropies: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "entropy"])
        for t, entropy in zip(grid, entropies):
            writer.writerow([repr(float(t)), repr(float(entropy))])


# Upper-triangle (row, col, weight) triples of a symmetric adjacency.
def write_adjacency_csv(path: PathLike, W: sp.spmatrix) -> None:
    upper = sp.triu(sp.coo_matrix(W), k=1).tocoo()
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["row", "col", "weight"])
        for i, j, w in sorted(zip(upper.row, upper.col, upper.data)):
            writer.writerow([int(i), int(j), repr(float(w))])


def read_adjacency_csv(path: PathLike, n: Optional[int] = None) -> sp.csr_matrix:
    header, rows = read_table(path)
    if header is not None and header != ["row", "col", "weight"]:
        raise DataError(f"{path}: expected columns row,col,weight, got {','.join(header)}")
    rows_, cols, weights = [], [], []
    for line, cells in rows:
        if len(cells) != 3:
            raise DataError(f"expected 3 columns, got {len(cells)}", line)
        i, j = parse_int(cells[0], line), parse_int(cells[1], line)
        weight = parse_float(cells[2], line)
        if i < 0 or j < 0:
            raise DataError("negative vertex index", line)
        if i == j:
            raise DataError(f"self-loop on vertex {i}", line)
        if weight < 0:
            raise DataError(f"negative weight {weight}", line)
        rows_.append(i)
        cols.append(j)
        weights.append(weight)

    size = max(max(rows_), max(cols)) + 1
    if n is not None:
        if size > n:
            raise DataError(f"{path} references vertex {size - 1} of a {n}-vertex graph")
        size = n
    directed = sp.csr_matrix((weights, (rows_, cols)), shape=(size, size))
    return directed.maximum(directed.T).tocsr()


def write_cloud_csv(path: PathLike, cloud: PointCloud) -> None:
    columns = [f"x_{i + 1}" for i in range(cloud.dim)]
    extra: List[np.ndarray] = []
    if cloud.labels is not None:
        columns.append(LABEL_COLUMN)
        extra.append(cloud.labels)
    if cloud.timepoints is not None:
        columns.append(TIMEPOINT_COLUMN)
        extra.append(cloud.timepoints)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for i in range(cloud.n):
            writer.writerow(
                [repr(float(x)) for x in cloud.data[i]] + [int(column[i]) for column in extra]
            )


def write_embedding_csv(
    path: PathLike,
    coords: FloatArray,
    labels: Optional[IntArray] = None,
    timepoints: Optional[IntArray] = None,
) -> None:
    columns = [INDEX_COLUMN] + [f"y_{i + 1}" for i in range(coords.shape[1])]
    if labels is not None:
        columns.append(LABEL_COLUMN)
    if timepoints is not None:
        columns.append(TIMEPOINT_COLUMN)

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for i, row in enumerate(coords):
            cells: List[Any] = [i] + [repr(float(y)) for y in row]
            if labels is not None:
                cells.append(int(labels[i]))
            if timepoints is not None:
                cells.append(int(timepoints[i]))
            writer.writerow(cells)


def read_embedding_csv(path: PathLike) -> EmbeddingTable:
    header, rows = read_table(path)
    if header is None or not header or header[0] != INDEX_COLUMN:
        raise DataError(f"{path}: embedding files start with an '{INDEX_COLUMN}' column")
    coordinate_columns = [i for i, name in enumerate(header) if name.startswith("y_")]
    if not coordinate_columns:
        raise DataError(f"{path}: no coordinate columns")

    coords = np.array(
        [[parse_float(cells[i], line) for i in coordinate_columns] for line, cells in rows],
        dtype=np.float64,
    )

    def optional_column(name: str) -> Optional[IntArray]:
        if name not in header:
            return None
        index = header.index(name)
        return np.array([parse_int(cells[index], line) for line, cells in rows], dtype=np.int64)

    return EmbeddingTable(
        coords=coords,
        labels=optional_column(LABEL_COLUMN),
        timepoints=optional_column(TIMEPOINT_COLUMN),
    )


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, default=_json_default, ensure_ascii=False)


def write_json(path: PathLike, document: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(document))
        f.write("\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e.msg})", e.lineno) from e
