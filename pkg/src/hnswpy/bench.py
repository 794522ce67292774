"""Build/query measurement harness producing CSV run records."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import astuple, dataclass, fields
from typing import Iterable, List, Optional, Sequence, TextIO

import numpy as np

from .dataset import Dataset
from .distance import CountingDistance
from .graph import HnswIndex, IndexParams
from .oracle import GroundTruth, ground_truth, recall

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    dataset: str
    n: int
    dim: int
    distance: str
    M: int
    Mmax: int
    Mmax0: int
    efConstruction: int
    levelMult: float
    selector: str
    extendCandidates: bool
    keepPruned: bool
    seed: int
    k: int
    ef: int
    recall: float
    query_time_us: float
    dist_comps: float
    # None when the run did not build the index (query-only runs)
    build_time_ms: Optional[float] = None
    status: str = "ok"


FIELDS = [f.name for f in fields(RunRecord)]
# fields that vary run to run even with a fixed seed
TIMING_FIELDS = ("query_time_us", "build_time_ms")


def _fmt(name: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        digits = 3 if name in TIMING_FIELDS or name == "dist_comps" else 6
        return f"{value:.{digits}f}"
    return str(value)


def write_csv(records: Iterable[RunRecord], fh: TextIO, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(FIELDS)
    for rec in records:
        w.writerow([_fmt(name, v) for name, v in zip(FIELDS, astuple(rec))])


_TYPES = {f.name: f.type for f in fields(RunRecord)}


def _parse(name: str, text: str):
    kind = _TYPES[name]
    if text == "":
        return None
    if kind == "int":
        return int(text)
    if kind in ("float", "Optional[float]"):
        return float(text)
    if kind == "bool":
        return text == "true"
    return text


def read_csv(fh: TextIO) -> List[RunRecord]:
    rows = list(csv.reader(fh))
    if not rows:
        return []
    if rows[0] != FIELDS:
        raise ValueError(f"unexpected CSV header {rows[0]}")
    return [RunRecord(*[_parse(n, t) for n, t in zip(FIELDS, row)]) for row in rows[1:]]


def build_index(data: Dataset, params: IndexParams, counter: Optional[CountingDistance] = None):
    """Insert every row of ``data``; returns (index, build time in ms)."""
    index = HnswIndex(data.dim, params, data.kind, capacity=max(1, len(data)))
    start = time.perf_counter()
    for v in data.vectors:
        index.insert(v, counter)
    return index, (time.perf_counter() - start) * 1e3


def _kth_distances(index: HnswIndex, queries: np.ndarray, truth: Sequence[np.ndarray], k: int):
    kind = index.kind
    out = np.empty(len(truth))
    for i, (q, row) in enumerate(zip(queries, truth)):
        out[i] = kind(q, index.vectors[row[k - 1]])
    return out


def measure(
    index: HnswIndex,
    queries: np.ndarray,
    truth,
    k: int,
    efs: Sequence[int],
    label: str = "",
    build_time_ms: Optional[float] = None,
) -> List[RunRecord]:
    """One record per ef: mean recall, query time and distance count over ``queries``.

    ``truth`` is a :class:`GroundTruth` or a list of id arrays (as read from
    ivecs), each at least ``k`` long.
    """
    queries = np.ascontiguousarray(getattr(queries, "vectors", queries), dtype=np.float32)
    ids = truth.ids if isinstance(truth, GroundTruth) else truth
    if len(ids) != len(queries):
        raise ValueError(f"{len(ids)} ground-truth rows for {len(queries)} queries")
    if any(len(row) < k for row in ids):
        raise ValueError(f"ground truth has fewer than k={k} ids for some queries")
    kth = _kth_distances(index, queries, ids, k)
    p = index.params
    out = []
    for ef in efs:
        if ef < k:
            raise ValueError(f"ef ({ef}) must be >= k ({k})")
        total_recall = 0.0
        total_time = 0.0
        total_comps = 0
        for i, q in enumerate(queries):
            counter = CountingDistance(index.kind)
            start = time.perf_counter()
            res = index.knn_search(q, k, ef, counter=counter)
            total_time += time.perf_counter() - start
            total_comps += counter.count
            total_recall += recall(
                [r.id for r in res], ids[i], k, [r.dist for r in res], kth[i]
            )
        nq = max(1, len(queries))
        out.append(
            RunRecord(
                dataset=label, n=index.n, dim=index.dim, distance=index.kind.name,
                M=p.m, Mmax=p.mmax, Mmax0=p.mmax0, efConstruction=p.ef_construction,
                levelMult=p.level_mult, selector=p.selector,
                extendCandidates=p.extend_candidates, keepPruned=p.keep_pruned,
                seed=p.seed, k=k, ef=ef, recall=total_recall / nq,
                query_time_us=total_time / nq * 1e6, dist_comps=total_comps / nq,
                build_time_ms=build_time_ms,
            )
        )
    return out


@dataclass
class Grid:
    """Parameter grid for :func:`sweep`. ``None`` entries mean "use the default"."""

    m: Sequence[int] = (16,)
    mmax: Sequence[Optional[int]] = (None,)
    mmax0: Sequence[Optional[int]] = (None,)
    ef_construction: Sequence[int] = (100,)
    level_mult: Sequence[Optional[float]] = (None,)
    selector: Sequence[str] = ("heuristic",)
    extend_candidates: Sequence[bool] = (False,)
    keep_pruned: Sequence[bool] = (True,)
    seed: int = 0

    def points(self):
        keys = ("m", "mmax", "mmax0", "ef_construction", "level_mult", "selector",
                "extend_candidates", "keep_pruned")
        for combo in itertools.product(*(getattr(self, k) for k in keys)):
            yield dict(zip(keys, combo), seed=self.seed)


def _error_record(label, data, point, k, efs, exc) -> List[RunRecord]:
    msg = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    nan = float("nan")
    return [
        RunRecord(
            dataset=label, n=len(data), dim=data.dim, distance=data.kind,
            M=point["m"], Mmax=point["mmax"] or -1, Mmax0=point["mmax0"] or -1,
            efConstruction=point["ef_construction"],
            levelMult=nan if point["level_mult"] is None else point["level_mult"],
            selector=point["selector"], extendCandidates=point["extend_candidates"],
            keepPruned=point["keep_pruned"], seed=point["seed"], k=k, ef=ef,
            recall=nan, query_time_us=nan, dist_comps=nan, status=msg,
        )
        for ef in efs
    ]


def sweep(
    data: Dataset,
    queries,
    grid: Grid,
    k: int,
    efs: Sequence[int],
    sizes: Optional[Sequence[int]] = None,
    truth=None,
    label: str = "",
) -> List[RunRecord]:
    """Build and query every grid point at every dataset prefix size.

    ``truth`` applies only to the full dataset; prefixes get exact ground
    truth computed here. A grid point that fails yields rows whose status
    column carries the error; the sweep moves on.
    """
    queries = np.ascontiguousarray(getattr(queries, "vectors", queries), dtype=np.float32)
    sizes = list(sizes) if sizes else [len(data)]
    records = []
    for size in sizes:
        if size > len(data):
            raise ValueError(f"size {size} exceeds the dataset ({len(data)} rows)")
        part = data.head(size)
        gt = truth if (truth is not None and size == len(data)) else ground_truth(part, queries, k)
        for point in grid.points():
            try:
                params = IndexParams(**point)
                index, build_ms = build_index(part, params)
                records.extend(measure(index, queries, gt, k, efs, label, build_ms))
            except (ValueError, OverflowError) as exc:
                log.warning("grid point %s failed: %s", point, exc)
                records.extend(_error_record(label, part, point, k, efs, exc))
    return records
