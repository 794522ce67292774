"""Hierarchical navigable small world (HNSW) k-NN index with an exact oracle and benchmark CLI."""

from .dataset import Dataset, SyntheticSpec, generate, read_bvecs, read_fvecs, read_ivecs
from .distance import (
    COSINE, EUCLIDEAN, CountingDistance, DistanceKind, custom_distance, distance,
    distance_counter_wrap,
)
from .graph import (
    HnswIndex, IndexParams, Neighbor, StatsReport, generate_level, index_stats,
    select_neighbors_heuristic, select_neighbors_simple,
)
from .oracle import GroundTruth, brute_force_knn, ground_truth, recall
from .storage import load_index, save_index

__version__ = "0.1.0"
