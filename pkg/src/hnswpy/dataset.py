"""Vector datasets: fvecs/bvecs/ivecs files and seeded synthetic families.

All three formats are little-endian record streams. A record is an int32
count ``d`` followed by ``d`` components (float32 for fvecs, uint8 for bvecs,
int32 for ivecs).
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import BinaryIO, List, Sequence, Union

import numpy as np

from .distance import KindLike, get_kind

log = logging.getLogger(__name__)

Source = Union[bytes, bytearray, memoryview, BinaryIO, str]

FAMILIES = ("uniform", "clusters")


class FormatError(ValueError):
    """Malformed vector file; ``offset`` is the byte offset of the bad record."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


@dataclass
class Dataset:
    vectors: np.ndarray
    kind: str = "l2"
    label: str = ""

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise ValueError("dataset has non-finite components")
        self.kind = get_kind(self.kind).name

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def head(self, n: int) -> "Dataset":
        return Dataset(self.vectors[:n], self.kind, self.label)

    def split(self, n_queries: int):
        """(base, queries) with the last ``n_queries`` rows held out."""
        cut = len(self) - n_queries
        if cut < 0:
            raise ValueError("more queries requested than rows available")
        return (
            Dataset(self.vectors[:cut], self.kind, self.label),
            Dataset(self.vectors[cut:], self.kind, self.label + ":queries"),
        )


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, str):
        with open(source, "rb") as fh:
            return fh.read()
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    return source.read()


def _read_records(buf: bytes, itemsize: int, dtype) -> np.ndarray:
    """Decode a stream of (int32 d, d items) records into an (n, d) array."""
    if not buf:
        return np.zeros((0, 0), dtype=dtype)
    if len(buf) < 4:
        raise FormatError("truncated record header", 0)
    d = int(np.frombuffer(buf, dtype="<i4", count=1)[0])
    if d <= 0:
        raise FormatError(f"record dimension must be positive, got {d}", 0)
    rec = 4 + d * itemsize
    if len(buf) % rec == 0:
        n = len(buf) // rec
        raw = np.frombuffer(buf, dtype=np.uint8).reshape(n, rec)
        heads = raw[:, :4].copy().view("<i4").ravel()
        if (heads == d).all():
            return raw[:, 4:].copy().view(dtype).reshape(n, d)
    _locate_error(buf, d, itemsize)
    raise AssertionError("unreachable")


def _locate_error(buf: bytes, d: int, itemsize: int) -> None:
    # slow path: walk the records to name the first bad offset
    rec = 4 + d * itemsize
    offset = 0
    while offset < len(buf):
        if offset + 4 > len(buf):
            raise FormatError("truncated record header", offset)
        k = int(np.frombuffer(buf, dtype="<i4", count=1, offset=offset)[0])
        if k != d:
            raise FormatError(f"record dimension {k} differs from first record's {d}", offset)
        if offset + rec > len(buf):
            raise FormatError("truncated record body", offset)
        offset += rec


def read_fvecs(source: Source, kind: KindLike = "l2") -> Dataset:
    vectors = _read_records(_read_bytes(source), 4, "<f4")
    if not np.isfinite(vectors).all():
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise FormatError("non-finite component", bad * (4 + 4 * vectors.shape[1]))
    return Dataset(vectors.astype(np.float32), kind)


def read_bvecs(source: Source, kind: KindLike = "l2") -> Dataset:
    return Dataset(_read_records(_read_bytes(source), 1, np.uint8).astype(np.float32), kind)


def read_ivecs(source: Source) -> List[np.ndarray]:
    """Ground-truth lists; records may differ in length."""
    buf = _read_bytes(source)
    out = []
    offset = 0
    # uniform-length fast path
    if len(buf) >= 4:
        k = int(np.frombuffer(buf, dtype="<i4", count=1)[0])
        rec = 4 + 4 * k
        if k >= 0 and len(buf) % rec == 0:
            rows = np.frombuffer(buf, dtype="<i4").reshape(-1, k + 1)
            if (rows[:, 0] == k).all():
                return [row.astype(np.int64) for row in rows[:, 1:]]
    while offset < len(buf):
        if offset + 4 > len(buf):
            raise FormatError("truncated record header", offset)
        k = int(np.frombuffer(buf, dtype="<i4", count=1, offset=offset)[0])
        if k < 0:
            raise FormatError(f"negative record length {k}", offset)
        if offset + 4 + 4 * k > len(buf):
            raise FormatError(f"record claims {k} ids but the stream ends first", offset)
        out.append(np.frombuffer(buf, dtype="<i4", count=k, offset=offset + 4).astype(np.int64))
        offset += 4 + 4 * k
    return out


def _write(sink, data: bytes) -> int:
    if isinstance(sink, str):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return len(data)


def _as_rows(vectors) -> np.ndarray:
    rows = np.asarray(getattr(vectors, "vectors", vectors))
    return rows if rows.ndim == 2 else rows.reshape(len(rows), -1)


def _pack(rows: np.ndarray, dtype) -> bytes:
    n, d = rows.shape
    out = np.empty((n, 4 + d * np.dtype(dtype).itemsize), dtype=np.uint8)
    out[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(rows.astype(dtype)).view(np.uint8).reshape(out[:, 4:].shape)
    return out.tobytes()


def write_fvecs(vectors, sink) -> int:
    return _write(sink, _pack(_as_rows(vectors), "<f4"))


def write_bvecs(vectors, sink) -> int:
    vectors = _as_rows(vectors)
    if vectors.size and (vectors.min() < 0 or vectors.max() > 255 or (vectors % 1).any()):
        raise ValueError("bvecs components must be integers in [0, 255]")
    return _write(sink, _pack(vectors, np.uint8))


def write_ivecs(lists: Sequence[Sequence[int]], sink) -> int:
    buf = io.BytesIO()
    for ids in lists:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < -(2**31) or ids.max() >= 2**31):
            raise ValueError("ids must fit in int32")
        buf.write(np.int32(ids.size).astype("<i4").tobytes())
        buf.write(ids.astype("<i4").tobytes())
    return _write(sink, buf.getvalue())


@dataclass(frozen=True)
class SyntheticSpec:
    family: str = "uniform"
    n: int = 1000
    dim: int = 4
    clusters: int = 10
    # half-width of the per-axis uniform offset around each cluster center
    spread: float = 0.001
    seed: int = 0
    kind: str = "l2"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.n < 0 or self.dim < 1:
            raise ValueError("n must be >= 0 and dim >= 1")
        if self.clusters < 1 or self.spread <= 0:
            raise ValueError("clusters must be >= 1 and spread > 0")


def cluster_centers(spec: SyntheticSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((spec.clusters, spec.dim))


def clusters_isolated(centers: np.ndarray, spread: float) -> bool:
    """True when every pair of centers is further apart than two cluster diameters' worth."""
    if centers.shape[0] < 2:
        return True
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return bool(dist.min() > 2 * spread * math.sqrt(centers.shape[1]))


def generate(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic dataset.

    ``uniform`` draws i.i.d. components in [0, 1]. ``clusters`` draws centers
    in the unit cube and assigns row i to center ``i % clusters``, offset by a
    uniform draw in [-spread, spread] per axis. If two centers come out too
    close to keep clusters isolated, the next seed is tried and logged.
    """
    label = f"{spec.family}-n{spec.n}-d{spec.dim}-s{spec.seed}"
    if spec.family == "uniform":
        rng = np.random.default_rng(spec.seed)
        return Dataset(rng.random((spec.n, spec.dim), dtype=np.float32), spec.kind, label)

    seed = spec.seed
    centers = cluster_centers(spec, seed)
    while not clusters_isolated(centers, spec.spread):
        log.warning("cluster centers for seed %d are not isolated; trying seed %d", seed, seed + 1)
        seed += 1
        centers = cluster_centers(spec, seed)
    rng = np.random.default_rng([seed, 1])
    labels = np.arange(spec.n) % spec.clusters
    offsets = rng.uniform(-spec.spread, spec.spread, size=(spec.n, spec.dim))
    vectors = (centers[labels] + offsets).astype(np.float32)
    if seed != spec.seed:
        label += f"-seed{seed}"
    return Dataset(vectors, spec.kind, label)
