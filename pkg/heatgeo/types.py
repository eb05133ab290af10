from typing import Literal, TypeAlias, Union

import numpy as np
import numpy.typing as npt

##
# Literals for enumerable options. We use these instead of enums for simplicity in the
# JSON configuration, where values appear as plain strings.

# Variants of the graph Laplacian. The random walk variant is represented through the
# symmetric normalized matrix and the degree vector.
LaplacianKind = Literal[
    "combinatorial",
    "symmetric_normalized",
    "random_walk",
]

# Ways of computing the heat kernel.
Approximation = Literal[
    # Dense eigendecomposition.
    "exact",
    # Truncated Chebyshev expansion, see `heat.chebyshev_heat`.
    "chebyshev",
    # Repeated backward Euler steps.
    "euler",
]

# Distance estimators that can be embedded or benchmarked.
Method = Literal[
    "heatgeo",
    # Potential distance of the heat kernel ("Heat-PHATE").
    "phate-potential",
    # Potential distance of the random walk P^t.
    "phate",
    # Heat-geodesic formula applied to the random walk P^t.
    "rand-geo",
    "diffusion-map",
    "shortest-path",
]

# Synthetic generators.
Dataset = Literal[
    "swiss-roll",
    "tree",
    "drift",
    "blobs",
]

# Weighting of the diffusion-map distance. "standard" divides squared differences by the
# stationary distribution, "literal" divides the differences themselves.
DiffusionWeighting = Literal["standard", "literal"]

# Fixed kernel bandwidth, or the distance to each point's k-th neighbor.
Bandwidth = Union[float, Literal["adaptive"]]

# Diffusion time, or "auto" for knee selection on the entropy curve.
DiffusionTime = Union[float, Literal["auto"]]

FloatArray: TypeAlias = npt.NDArray[np.float64]
IntArray: TypeAlias = npt.NDArray[np.int64]
