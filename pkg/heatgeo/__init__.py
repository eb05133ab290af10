from .distance import DistanceMatrix, HarnackParams, heat_geodesic, triplet_distance  # noqa: F401
from .embedding import Embedding, MdsConfig, smacof  # noqa: F401
from .graph import PointCloud, build_knn_graph, laplacian  # noqa: F401
from .heat import HeatKernel, compute_heat, select_time_knee  # noqa: F401
from .methods import embed, estimate_distances, heatgeo_embed  # noqa: F401
