"""Binary index snapshots.

Layout (all little-endian)::

    magic   8 bytes  b"HNSWSNAP"
    version uint32
    then five blocks, each  tag(4 bytes) | payload length (uint64) | payload

    PARM  m, mmax, mmax0, ef_construction (uint32 x4), level_mult (float64),
          selector, extend_candidates, keep_pruned (uint8 x3), seed (uint64),
          distance name (uint16 length + utf-8), PCG64 state (state, inc as
          16-byte integers, has_uint32 uint8, uinteger uint32)
    VECS  n (uint64), dim (uint32), n * dim float32
    LEVL  n uint8 levels
    ADJC  for each node, for each layer 0..level: count (uint32), ids (uint32)
    ENTR  enter point (uint32, 0xFFFFFFFF when empty), max_layer (uint32)

Saving is deterministic. Loading validates every structural invariant before
handing the index back.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Dict, Union

import numpy as np

from .distance import get_kind
from .graph import HnswIndex, IndexParams, InvariantError
from . import _kernels as K

MAGIC = b"HNSWSNAP"
VERSION = 1
BLOCKS = (b"PARM", b"VECS", b"LEVL", b"ADJC", b"ENTR")
NO_ENTER_POINT = 0xFFFFFFFF


class SnapshotError(ValueError):
    """Unreadable or inconsistent snapshot; ``check`` names the failed invariant."""

    def __init__(self, message: str, check: str = "format"):
        self.check = check
        super().__init__(message)


def _params_block(index: HnswIndex) -> bytes:
    p = index.params
    name = index.kind.name.encode()
    state = index.rng.bit_generator.state
    if state["bit_generator"] != "PCG64":
        raise SnapshotError(f"cannot store {state['bit_generator']} generator state")
    out = struct.pack(
        "<IIIIdBBBQH", p.m, p.mmax, p.mmax0, p.ef_construction, p.level_mult,
        p.selector == "heuristic", p.extend_candidates, p.keep_pruned, p.seed, len(name),
    )
    out += name
    out += state["state"]["state"].to_bytes(16, "little")
    out += state["state"]["inc"].to_bytes(16, "little")
    out += struct.pack("<BI", state["has_uint32"], state["uinteger"])
    return out


def _adjacency_block(index: HnswIndex) -> bytes:
    buf = io.BytesIO()
    for node in range(index.n):
        for layer in range(int(index.levels[node]) + 1):
            ids = K.neighbors(index._graph, node, layer)
            buf.write(struct.pack("<I", ids.shape[0]))
            buf.write(ids.astype("<u4").tobytes())
    return buf.getvalue()


def snapshot_bytes(index: HnswIndex) -> bytes:
    vecs = struct.pack("<QI", index.n, index.dim) + index.vectors.astype("<f4").tobytes()
    levels = index.levels.astype(np.uint8).tobytes()
    ep = NO_ENTER_POINT if index.enter_point is None else index.enter_point
    entr = struct.pack("<II", ep, index.max_layer)
    payloads = (_params_block(index), vecs, levels, _adjacency_block(index), entr)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    for tag, payload in zip(BLOCKS, payloads):
        out.write(tag)
        out.write(struct.pack("<Q", len(payload)))
        out.write(payload)
    return out.getvalue()


def save_index(index: HnswIndex, sink: Union[str, BinaryIO]) -> int:
    """Write a snapshot of ``index`` to a path or binary stream; return the byte count."""
    data = snapshot_bytes(index)
    if isinstance(sink, str):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return len(data)


def read_blocks(data: bytes) -> Dict[bytes, bytes]:
    """Split a snapshot into its tagged blocks after checking magic and version."""
    if len(data) < 12 or data[:8] != MAGIC:
        raise SnapshotError("bad magic tag: not an index snapshot")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (expected {VERSION})")
    blocks = {}
    offset = 12
    for tag in BLOCKS:
        if offset + 12 > len(data):
            raise SnapshotError(f"truncated snapshot: missing block {tag.decode()}")
        got = data[offset : offset + 4]
        if got != tag:
            raise SnapshotError(f"expected block {tag.decode()} at offset {offset}, found {got!r}")
        (length,) = struct.unpack_from("<Q", data, offset + 4)
        offset += 12
        if offset + length > len(data):
            raise SnapshotError(f"truncated snapshot: block {tag.decode()} is cut short")
        blocks[tag] = data[offset : offset + length]
        offset += length
    if offset != len(data):
        raise SnapshotError(f"{len(data) - offset} trailing bytes after the last block")
    return blocks


class _Reader:
    def __init__(self, tag: bytes, data: bytes):
        self.tag = tag.decode()
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise SnapshotError(f"truncated {self.tag} block")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise SnapshotError(f"truncated {self.tag} block")
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise SnapshotError(f"{self.tag} block has {len(self.data) - self.pos} unread bytes")


def load_index(source: Union[str, bytes, BinaryIO]) -> HnswIndex:
    if isinstance(source, str):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    else:
        data = source.read()
    blocks = read_blocks(data)

    r = _Reader(b"PARM", blocks[b"PARM"])
    m, mmax, mmax0, efc, level_mult, heuristic, extend, keep, seed, name_len = r.take("<IIIIdBBBQH")
    try:
        kind = get_kind(r.raw(name_len).decode())
    except ValueError as exc:
        raise SnapshotError(str(exc), check="distance") from None
    state = int.from_bytes(r.raw(16), "little")
    inc = int.from_bytes(r.raw(16), "little")
    has_uint32, uinteger = r.take("<BI")
    r.done()
    try:
        params = IndexParams(
            m=m, mmax=mmax, mmax0=mmax0, ef_construction=efc, level_mult=level_mult,
            selector="heuristic" if heuristic else "simple",
            extend_candidates=bool(extend), keep_pruned=bool(keep), seed=seed,
        )
    except ValueError as exc:
        raise SnapshotError(f"invalid parameters: {exc}") from None
    rng_state = {
        "bit_generator": "PCG64",
        "state": {"state": state, "inc": inc},
        "has_uint32": has_uint32,
        "uinteger": uinteger,
    }

    r = _Reader(b"VECS", blocks[b"VECS"])
    n, dim = r.take("<QI")
    if dim < 1:
        raise SnapshotError("dimension must be >= 1")
    vectors = np.frombuffer(r.raw(4 * n * dim), dtype="<f4").reshape(n, dim)
    r.done()

    levels = np.frombuffer(blocks[b"LEVL"], dtype=np.uint8)
    if levels.shape[0] != n:
        raise SnapshotError(f"LEVL block holds {levels.shape[0]} levels for {n} vectors")

    r = _Reader(b"ADJC", blocks[b"ADJC"])
    adjacency = []
    for node in range(n):
        lists = []
        for _ in range(int(levels[node]) + 1):
            (count,) = r.take("<I")
            lists.append(np.frombuffer(r.raw(4 * count), dtype="<u4").astype(np.int64))
        adjacency.append(lists)
    r.done()

    r = _Reader(b"ENTR", blocks[b"ENTR"])
    ep, max_layer = r.take("<II")
    r.done()
    ep = None if ep == NO_ENTER_POINT else ep

    try:
        return HnswIndex.from_adjacency(
            vectors, levels, adjacency, ep, max_layer, params=params, kind=kind, dim=dim,
            rng_state=rng_state,
        )
    except InvariantError as exc:
        raise SnapshotError(f"invariant violated: {exc}", check=exc.check) from exc
    except ValueError as exc:
        raise SnapshotError(f"invalid snapshot contents: {exc}") from exc
