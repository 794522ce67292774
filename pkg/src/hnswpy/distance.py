"""Distance kernels and the pluggable dissimilarity contract.

Every kernel is a numba-jitted function of two 1-D float32 arrays returning a
float64. Any jitted ``f(a, b) -> float`` can be plugged into the graph code
through :func:`custom_distance`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Union

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def euclidean(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        diff = np.float64(a[i]) - np.float64(b[i])
        s += diff * diff
    return np.sqrt(s)


@numba.njit(cache=True, nogil=True)
def cosine_distance(a, b):
    dot = 0.0
    na = 0.0
    nb = 0.0
    for i in range(a.shape[0]):
        x = np.float64(a[i])
        y = np.float64(b[i])
        dot += x * y
        na += x * x
        nb += y * y
    d = 1.0 - dot / np.sqrt(na * nb)
    # rounding can push parallel vectors a hair below zero
    if d < 0.0:
        return 0.0
    return d


@dataclass(frozen=True)
class DistanceKind:
    """A named dissimilarity backed by a jitted kernel.

    ``nonzero`` marks kinds that are undefined for the zero vector; such
    vectors are rejected when they enter an index or a query.
    """

    name: str
    kernel: Callable = None
    nonzero: bool = False
    # metric code understood by the graph kernels; -1 marks user kinds
    code: int = -1

    def __call__(self, a, b) -> float:
        return distance(self, a, b)


EUCLIDEAN = DistanceKind("l2", euclidean, code=0)
COSINE = DistanceKind("cosine", cosine_distance, nonzero=True, code=1)

_REGISTRY: Dict[str, DistanceKind] = {"l2": EUCLIDEAN, "cosine": COSINE}
_ALIASES = {"euclidean": "l2", "cosinedistance": "cosine"}

KindLike = Union[str, DistanceKind]


def custom_distance(name: str, fn: Callable, nonzero: bool = False) -> DistanceKind:
    """Register a user dissimilarity under ``name`` and return its kind.

    ``fn`` takes two float32 vectors and returns a non-negative float. Plain
    Python functions are compiled with ``numba.njit``; they must therefore be
    written in the numba-supported subset.
    """
    if name.lower() in _REGISTRY or name.lower() in _ALIASES:
        raise ValueError(f"distance {name!r} is already registered")
    if not isinstance(fn, numba.core.registry.CPUDispatcher):
        fn = numba.njit(nogil=True)(fn)
    kind = DistanceKind(name.lower(), fn, nonzero)
    _REGISTRY[kind.name] = kind
    return kind


def get_kind(kind: KindLike) -> DistanceKind:
    if isinstance(kind, DistanceKind):
        return kind
    key = str(kind).lower()
    key = _ALIASES.get(key, key)
    try:
        return _REGISTRY[key]
    except KeyError:
        raise ValueError(
            f"unknown distance {kind!r}; known: {', '.join(sorted(_REGISTRY))}"
        ) from None


def as_vector(x, dim: int = None, kind: KindLike = None) -> np.ndarray:
    """Coerce ``x`` to a contiguous float32 vector and check it is admissible."""
    v = np.ascontiguousarray(x, dtype=np.float32)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if v.shape[0] == 0:
        raise ValueError("vectors must have dimension >= 1")
    if not np.isfinite(v).all():
        raise ValueError("vector has non-finite components")
    if kind is not None and get_kind(kind).nonzero and not v.any():
        raise ValueError(f"zero vector is not admissible under {get_kind(kind).name}")
    return v


def distance(kind: KindLike, a, b) -> float:
    """Dissimilarity between ``a`` and ``b`` under ``kind``."""
    kind = get_kind(kind)
    a = as_vector(a, kind=kind)
    b = as_vector(b, dim=a.shape[0], kind=kind)
    return float(kind.kernel(a, b))


class CountingDistance:
    """Distance handle that counts evaluations.

    The count lives in a one-element int64 array so the jitted search and
    build kernels can bump it directly; pass the handle as ``counter=`` to
    :meth:`HnswIndex.insert` or :meth:`HnswIndex.knn_search`.
    """

    def __init__(self, kind: KindLike):
        self.kind = get_kind(kind)
        self.cell = np.zeros(1, dtype=np.int64)

    @property
    def count(self) -> int:
        return int(self.cell[0])

    def reset(self) -> None:
        self.cell[0] = 0

    def __call__(self, a, b) -> float:
        d = distance(self.kind, a, b)
        self.cell[0] += 1
        return d

    def __repr__(self) -> str:
        return f"CountingDistance({self.kind.name!r}, count={self.count})"


def distance_counter_wrap(kind: KindLike) -> CountingDistance:
    return CountingDistance(kind)
