"""Hierarchical navigable small world index."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels as K
from .distance import CountingDistance, DistanceKind, KindLike, as_vector, get_kind

MAX_LEVEL = 31
# node ids are int32 in memory; snapshots store them as uint32
MAX_ELEMENTS = 2**31 - 1

SELECTORS = ("simple", "heuristic")


class Neighbor(NamedTuple):
    id: int
    dist: float


class EmptyIndexError(ValueError):
    pass


class InvariantError(ValueError):
    """A structural invariant of the index does not hold."""

    def __init__(self, check: str, detail: str = ""):
        self.check = check
        super().__init__(f"{check}: {detail}" if detail else check)


@dataclass(frozen=True)
class IndexParams:
    """Construction parameters.

    ``mmax``, ``mmax0`` and ``level_mult`` default to ``m``, ``2 * m`` and
    ``1 / ln(m)``.
    """

    m: int = 16
    mmax: Optional[int] = None
    mmax0: Optional[int] = None
    ef_construction: int = 100
    level_mult: Optional[float] = None
    selector: str = "heuristic"
    extend_candidates: bool = False
    keep_pruned: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.mmax is None:
            object.__setattr__(self, "mmax", self.m)
        if self.mmax0 is None:
            object.__setattr__(self, "mmax0", 2 * self.m)
        if self.level_mult is None:
            if self.m < 2:
                raise ValueError("level_mult must be given explicitly when m < 2")
            object.__setattr__(self, "level_mult", 1.0 / math.log(self.m))
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.mmax < self.m or self.mmax0 < self.m:
            raise ValueError("mmax and mmax0 must be >= m")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if not (self.level_mult >= 0 and math.isfinite(self.level_mult)):
            raise ValueError("level_mult must be a finite non-negative number")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


def level_from_uniform(u: float, level_mult: float) -> int:
    """floor(-ln(u) * level_mult), clamped to [0, MAX_LEVEL]."""
    if level_mult == 0:
        return 0
    x = -math.log(u) * level_mult
    if x >= MAX_LEVEL:
        return MAX_LEVEL
    return max(0, int(math.floor(x)))


def generate_level(rng: np.random.Generator, level_mult: float) -> int:
    # 1 - [0, 1) keeps u inside (0, 1]; exactly one draw per call
    return level_from_uniform(1.0 - rng.random(), level_mult)


def select_neighbors_simple(candidates: Iterable[Neighbor], m: int) -> List[Neighbor]:
    ids, ds = _as_arrays(candidates)
    ids, ds = K.select_simple(ids, ds, m)
    return _as_neighbors(ids, ds)


def select_neighbors_heuristic(
    base,
    candidates: Iterable[Neighbor],
    m: int,
    vectors: np.ndarray,
    kind: KindLike = "l2",
    keep_pruned: bool = False,
) -> List[Neighbor]:
    """Diversity-pruned selection over candidates drawn from ``vectors``.

    Candidate ids index rows of ``vectors``; distances are taken as given
    (relative to ``base``). Use :meth:`HnswIndex.select_neighbors_heuristic`
    for the variant that can extend candidates through the graph.
    """
    kind = get_kind(kind)
    data = np.ascontiguousarray(vectors, dtype=np.float32)
    base = as_vector(base, dim=data.shape[1])
    ids, ds = _as_arrays(candidates)
    ids, ds = K.kernels_for(kind).select_heuristic(
        data, _EMPTY_GRAPH, kind.code, base, -1, ids, ds, m, 0, False, keep_pruned,
        np.zeros(1, dtype=np.int64),
    )
    return _as_neighbors(ids, ds)


_EMPTY_GRAPH = (
    np.zeros((0, 1), dtype=np.int32),
    np.zeros(0, dtype=np.int32),
    np.zeros((0, 1), dtype=np.int32),
    np.zeros(0, dtype=np.int32),
    np.zeros(0, dtype=np.int32),
)


def _as_arrays(candidates: Iterable[Neighbor]):
    cands = list(candidates)
    ids = np.array([int(c[0]) for c in cands], dtype=np.int64)
    ds = np.array([float(c[1]) for c in cands], dtype=np.float64)
    return ids, ds


def _as_neighbors(ids, ds) -> List[Neighbor]:
    return [Neighbor(int(i), float(d)) for i, d in zip(ids, ds)]


@dataclass
class StatsReport:
    n: int
    max_layer: int
    enter_point_level: int
    layer_population: List[int]
    # degree_histogram[l][d] = number of layer-l nodes with degree d
    degree_histogram: List[List[int]]
    layer_link_entries: List[int]
    total_link_entries: int
    total_lists: int
    mean_level: float
    mean_link_entries: float
    # bytes of the snapshot adjacency block: a uint32 count per list plus a
    # uint32 per link entry
    adjacency_bytes: int = field(init=False)

    def __post_init__(self):
        self.adjacency_bytes = 4 * (self.total_lists + self.total_link_entries)


class HnswIndex:
    """Layered proximity graph supporting incremental insertion and k-NN queries.

    Writes (``insert``/``add``) need exclusive access; any number of threads
    may query a quiescent index.
    """

    def __init__(
        self,
        dim: int,
        params: Optional[IndexParams] = None,
        kind: KindLike = "l2",
        capacity: int = 1024,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.params = params if params is not None else IndexParams()
        self.kind: DistanceKind = get_kind(kind)
        self._k = K.kernels_for(self.kind)
        self.rng = np.random.Generator(np.random.PCG64(self.params.seed))
        self.n = 0
        self.enter_point: Optional[int] = None
        self.max_layer = 0
        capacity = max(1, capacity)
        self._data = np.zeros((capacity, self.dim), dtype=np.float32)
        self._levels = np.zeros(capacity, dtype=np.int32)
        self._links0 = np.zeros((capacity, self.params.mmax0), dtype=np.int32)
        self._deg0 = np.zeros(capacity, dtype=np.int32)
        self._ubase = np.full(capacity, -1, dtype=np.int32)
        self._upper = np.zeros((max(1, capacity // 4), self.params.mmax), dtype=np.int32)
        self._udeg = np.zeros(self._upper.shape[0], dtype=np.int32)
        self._ublocks = 0
        self._tls = threading.local()

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        p = self.params
        return (
            f"HnswIndex(n={self.n}, dim={self.dim}, kind={self.kind.name!r}, m={p.m}, "
            f"max_layer={self.max_layer})"
        )

    @property
    def vectors(self) -> np.ndarray:
        return self._data[: self.n]

    @property
    def levels(self) -> np.ndarray:
        return self._levels[: self.n]

    @property
    def _graph(self):
        return (self._links0, self._deg0, self._upper, self._udeg, self._ubase)

    def _scratch(self):
        visited = getattr(self._tls, "visited", None)
        if visited is None or visited.shape[0] < self._data.shape[0]:
            visited = np.zeros(self._data.shape[0], dtype=np.int32)
            self._tls.visited = visited
            self._tls.tagbox = np.zeros(1, dtype=np.int64)
        return visited, self._tls.tagbox

    def _counter_cell(self, counter: Optional[CountingDistance]):
        if counter is None:
            return np.zeros(1, dtype=np.int64)
        return counter.cell

    def _reserve(self, level: int) -> None:
        cap = self._data.shape[0]
        if self.n >= cap:
            new = min(2 * cap, MAX_ELEMENTS)
            self._data = _grow(self._data, new)
            self._levels = _grow(self._levels, new)
            self._links0 = _grow(self._links0, new)
            self._deg0 = _grow(self._deg0, new)
            self._ubase = _grow(self._ubase, new, fill=-1)
        if self._ublocks + level > self._upper.shape[0]:
            new = max(2 * self._upper.shape[0], self._ublocks + level)
            self._upper = _grow(self._upper, new)
            self._udeg = _grow(self._udeg, new)

    def _check_query(self, q) -> np.ndarray:
        return as_vector(q, dim=self.dim, kind=self.kind)

    def insert(self, q, counter: Optional[CountingDistance] = None) -> int:
        """Insert one vector and return its node id."""
        q = self._check_query(q)
        if self.n >= MAX_ELEMENTS:
            raise OverflowError(f"index is at its capacity of {MAX_ELEMENTS} elements")
        level = generate_level(self.rng, self.params.level_mult)
        self._reserve(level)
        node = self.n
        self._data[node] = q
        self._levels[node] = level
        self._deg0[node] = 0
        if level > 0:
            self._ubase[node] = self._ublocks
            self._udeg[self._ublocks : self._ublocks + level] = 0
            self._ublocks += level
        self.n += 1

        if self.enter_point is None:
            self.enter_point = node
            self.max_layer = level
            return node

        p = self.params
        visited, tagbox = self._scratch()
        self._k.insert(
            self._data, self._graph, self.kind.code, node, level, self.enter_point,
            self.max_layer, p.m, p.mmax, p.mmax0, p.ef_construction,
            p.selector == "heuristic", p.extend_candidates, p.keep_pruned,
            visited, tagbox, self._counter_cell(counter),
        )
        if level > self.max_layer:
            self.max_layer = level
            self.enter_point = node
        return node

    def add(self, vectors, counter: Optional[CountingDistance] = None) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError(f"expected a 2-D array of vectors, got shape {vectors.shape}")
        return np.array([self.insert(v, counter) for v in vectors], dtype=np.int64)

    def neighbors(self, node: int, layer: int = 0) -> np.ndarray:
        """Copy of the layer-``layer`` neighbor list of ``node``."""
        if not 0 <= node < self.n:
            raise IndexError(f"node {node} out of range")
        if not 0 <= layer <= self._levels[node]:
            raise ValueError(f"node {node} is not present in layer {layer}")
        return np.array(K.neighbors(self._graph, node, layer), dtype=np.int64)

    def layer_arrays(self, layer: int):
        """(nodes, padded links, degrees) for every node present in ``layer``.

        Unused link slots hold -1.
        """
        nodes = np.flatnonzero(self.levels >= layer)
        if layer == 0:
            links = self._links0[: self.n].copy()
            degs = self._deg0[: self.n].copy()
        else:
            blocks = self._ubase[nodes] + layer - 1
            links = self._upper[blocks].copy()
            degs = self._udeg[blocks].copy()
        width = links.shape[1]
        links[np.arange(width)[None, :] >= degs[:, None]] = -1
        return nodes, links, degs

    def search_layer(
        self,
        q,
        enter_points: Sequence[Neighbor],
        ef: int,
        layer: int,
        counter: Optional[CountingDistance] = None,
    ) -> List[Neighbor]:
        """Beam search restricted to one layer, nearest first, at most ``ef`` long.

        Enter-point distances are taken as given.
        """
        if self.n == 0:
            raise EmptyIndexError("index is empty")
        if ef < 1:
            raise ValueError("ef must be >= 1")
        q = self._check_query(q)
        ids, ds = _as_arrays(enter_points)
        if ids.size == 0:
            raise ValueError("at least one enter point is required")
        if (ids < 0).any() or (ids >= self.n).any():
            raise IndexError("enter point out of range")
        if (self.levels[ids] < layer).any():
            raise ValueError(f"every enter point must be present in layer {layer}")
        visited, tagbox = self._scratch()
        ids, ds = self._k.search_layer(
            self._data, self._graph, self.kind.code, q, ids, ds, ef, layer,
            visited, tagbox, self._counter_cell(counter),
        )
        return _as_neighbors(ids, ds)

    def select_neighbors_heuristic(
        self,
        base,
        candidates: Iterable[Neighbor],
        m: int,
        layer: int = 0,
        extend_candidates: bool = False,
        keep_pruned: bool = False,
        base_id: int = -1,
        counter: Optional[CountingDistance] = None,
    ) -> List[Neighbor]:
        base = self._check_query(base)
        ids, ds = _as_arrays(candidates)
        ids, ds = self._k.select_heuristic(
            self._data, self._graph, self.kind.code, base, base_id, ids, ds, m, layer,
            extend_candidates, keep_pruned, self._counter_cell(counter),
        )
        return _as_neighbors(ids, ds)

    def shrink_connections(self, node: int, layer: int, cap: Optional[int] = None) -> None:
        """Re-select the list of ``node`` at ``layer`` down to ``cap`` entries.

        ``cap`` defaults to the layer's degree cap. Dropped links are removed
        from both endpoints.
        """
        if cap is None:
            cap = self.params.mmax0 if layer == 0 else self.params.mmax
        nbrs = self.neighbors(node, layer)
        if nbrs.shape[0] <= cap:
            return
        self._k.shrink_to(
            self._data, self._graph, self.kind.code, node, layer, nbrs, cap,
            self.params.selector == "heuristic", np.zeros(1, dtype=np.int64),
        )

    def knn_search(
        self,
        q,
        k: int,
        ef: Optional[int] = None,
        counter: Optional[CountingDistance] = None,
    ) -> List[Neighbor]:
        """Approximate k nearest neighbors of ``q``, nearest first.

        ``ef`` (defaults to ``k``) is the beam width at layer 0 and must be
        at least ``k``.
        """
        if self.n == 0:
            raise EmptyIndexError("cannot search an empty index")
        ef = k if ef is None else ef
        if k < 1:
            raise ValueError("k must be >= 1")
        if ef < k:
            raise ValueError(f"ef ({ef}) must be >= k ({k})")
        q = self._check_query(q)
        visited, tagbox = self._scratch()
        ids, ds = self._k.knn_search(
            self._data, self._graph, self.kind.code, q, self.enter_point, self.max_layer,
            k, ef, visited, tagbox, self._counter_cell(counter),
        )
        return _as_neighbors(ids, ds)

    def validate(self) -> None:
        """Full structural check; raises :class:`InvariantError` on the first failure."""
        if self.n == 0:
            if self.enter_point is not None:
                raise InvariantError("enter_point", "empty index has an enter point")
            return
        levels = self.levels
        if self.enter_point is None or not 0 <= self.enter_point < self.n:
            raise InvariantError("enter_point", f"invalid enter point {self.enter_point}")
        top = int(levels.max())
        if not (self._levels[self.enter_point] == self.max_layer == top):
            raise InvariantError(
                "enter_point",
                f"level of enter point {self._levels[self.enter_point]}, "
                f"max_layer {self.max_layer}, highest level {top}",
            )
        if (levels < 0).any() or top > MAX_LEVEL:
            raise InvariantError("levels", "level outside [0, 31]")
        code, node, layer = K.validate_graph(
            self._levels, self._graph, self.n, self.params.mmax, self.params.mmax0
        )
        if code != K.OK:
            raise InvariantError(_CHECK_NAMES[code], f"node {node}, layer {layer}")

    def stats(self) -> StatsReport:
        return index_stats(self)

    @classmethod
    def from_adjacency(
        cls,
        vectors,
        levels: Sequence[int],
        adjacency: Sequence[Sequence[Sequence[int]]],
        enter_point: Optional[int],
        max_layer: int,
        params: Optional[IndexParams] = None,
        kind: KindLike = "l2",
        dim: Optional[int] = None,
        rng_state: Optional[dict] = None,
        validate: bool = True,
    ) -> "HnswIndex":
        """Assemble an index from explicit structure.

        ``adjacency[n][l]`` lists the layer-``l`` neighbors of node ``n``;
        node ``n`` must have exactly ``levels[n] + 1`` lists.
        """
        vectors = np.asarray(vectors, dtype=np.float32)
        n = len(levels)
        if dim is None:
            dim = vectors.shape[1]
        vectors = vectors.reshape(n, dim)
        index = cls(dim, params, kind, capacity=max(1, n))
        if rng_state is not None:
            index.rng.bit_generator.state = rng_state
        for i in range(n):
            as_vector(vectors[i], dim=dim, kind=index.kind)
        if len(adjacency) != n:
            raise InvariantError("adjacency", f"{len(adjacency)} node entries for {n} levels")
        levels = np.asarray(levels, dtype=np.int64)
        if n and (levels.min() < 0 or levels.max() > MAX_LEVEL):
            raise InvariantError("levels", "level outside [0, 31]")
        index._reserve(int(levels.sum()))
        index._data[:n] = vectors
        index._levels[:n] = levels
        p = index.params
        for node in range(n):
            lists = adjacency[node]
            if len(lists) != levels[node] + 1:
                raise InvariantError(
                    "layer_membership",
                    f"node {node} has {len(lists)} lists but level {levels[node]}",
                )
            if levels[node] > 0:
                index._ubase[node] = index._ublocks
                index._ublocks += int(levels[node])
            for layer, ids in enumerate(lists):
                cap = p.mmax0 if layer == 0 else p.mmax
                if len(ids) > cap:
                    raise InvariantError(
                        "degree_cap", f"node {node}, layer {layer}: {len(ids)} > {cap}"
                    )
                ids = np.asarray(ids, dtype=np.int64)
                if ids.size and (ids.min() < 0 or ids.max() >= n):
                    raise InvariantError("id_range", f"node {node}, layer {layer}")
                K.set_neighbors(index._graph, node, layer, ids, len(ids))
        index.n = n
        index.enter_point = None if enter_point is None else int(enter_point)
        index.max_layer = int(max_layer)
        if validate:
            index.validate()
        return index


_CHECK_NAMES = {
    K.DEGREE_CAP: "degree_cap",
    K.ID_RANGE: "id_range",
    K.SELF_LOOP: "self_loop",
    K.DUPLICATE: "duplicate_link",
    K.LEVEL_MISMATCH: "layer_membership",
    K.ASYMMETRIC: "symmetry",
}


def _grow(a: np.ndarray, rows: int, fill=0) -> np.ndarray:
    out = np.full((rows,) + a.shape[1:], fill, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


def index_stats(index: HnswIndex) -> StatsReport:
    n = index.n
    if n == 0:
        return StatsReport(0, 0, 0, [], [], [], 0, 0, 0.0, 0.0)
    levels = index.levels
    population, histogram, entries = [], [], []
    for layer in range(index.max_layer + 1):
        nodes, _, degs = index.layer_arrays(layer)
        population.append(int(nodes.size))
        histogram.append(np.bincount(degs).tolist())
        entries.append(int(degs.sum()))
    total = sum(entries)
    return StatsReport(
        n=n,
        max_layer=index.max_layer,
        enter_point_level=int(levels[index.enter_point]),
        layer_population=population,
        degree_histogram=histogram,
        layer_link_entries=entries,
        total_link_entries=total,
        total_lists=int(levels.sum()) + n,
        mean_level=float(levels.mean()),
        mean_link_entries=total / n,
    )
