"""Exact k-NN by full scan, and recall scoring against it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import _kernels as K
from .distance import KindLike, as_vector, get_kind
from .graph import Neighbor


def _distances_to(data: np.ndarray, kind, q: np.ndarray) -> np.ndarray:
    # same kernels as the index, so both rank pairs identically
    return K.kernels_for(kind).many_distances(data, kind.code, q)


def brute_force_knn(dataset, q, k: int, kind: Optional[KindLike] = None) -> List[Neighbor]:
    """Exact ``k`` nearest rows of ``dataset`` to ``q``, ties broken by row id.

    ``dataset`` is a :class:`~hnswpy.dataset.Dataset` or a 2-D array; ``kind``
    defaults to the dataset's own kind (or l2 for bare arrays).
    """
    data, kind = _unpack(dataset, kind)
    if data.shape[0] == 0:
        raise ValueError("dataset is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = as_vector(q, dim=data.shape[1], kind=kind)
    ds = _distances_to(data, kind, q)
    k = min(k, ds.shape[0])
    if k < ds.shape[0]:
        # keep everything tied with the k-th distance so the id tie-break is exact
        kth = np.partition(ds, k - 1)[k - 1]
        pool = np.flatnonzero(ds <= kth)
    else:
        pool = np.arange(ds.shape[0])
    order = pool[np.lexsort((pool, ds[pool]))][:k]
    return [Neighbor(int(i), float(ds[i])) for i in order]


@dataclass
class GroundTruth:
    """Per-query true neighbor ids (nearest first) and their distances."""

    ids: np.ndarray
    dists: np.ndarray

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]


def ground_truth(dataset, queries, k: int, kind: Optional[KindLike] = None) -> GroundTruth:
    data, kind = _unpack(dataset, kind)
    queries = _rows(queries)
    if k > data.shape[0]:
        raise ValueError(f"k ({k}) exceeds the dataset size ({data.shape[0]})")
    ids = np.empty((queries.shape[0], k), dtype=np.int64)
    dists = np.empty((queries.shape[0], k), dtype=np.float64)
    for i, q in enumerate(queries):
        res = brute_force_knn(data, q, k, kind)
        ids[i] = [r.id for r in res]
        dists[i] = [r.dist for r in res]
    return GroundTruth(ids, dists)


def recall(
    found: Iterable[int],
    truth: Sequence[int],
    k: int,
    found_dists: Optional[Sequence[float]] = None,
    kth_dist: Optional[float] = None,
) -> float:
    """|found ∩ truth| / k.

    When ``found_dists`` and ``kth_dist`` are supplied, a found element whose
    distance equals the k-th true distance also counts, so ties at the
    boundary do not depend on which tied id the truth happened to keep.
    """
    truth_set = set(int(t) for t in list(truth)[:k])
    found = [int(f) for f in found]
    if found_dists is None or kth_dist is None:
        hits = len(set(found) & truth_set)
    else:
        hits = 0
        for f, d in zip(found, found_dists):
            if f in truth_set or d <= kth_dist:
                hits += 1
        hits = min(hits, k)
    return hits / k


def _rows(x) -> np.ndarray:
    vectors = getattr(x, "vectors", x)
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of vectors, got shape {arr.shape}")
    return arr


def _unpack(dataset, kind):
    if kind is None:
        kind = getattr(dataset, "kind", "l2")
    return _rows(dataset), get_kind(kind)
