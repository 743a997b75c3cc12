"""Exact cosine top-k vector store with versioned binary persistence.

All vectors are unit-normalized, so cosine similarity is computed as a dot
product against a dense matrix; search is exact (no approximation) and ties
break by ascending record id.

On-disk layout (little-endian throughout):

    magic "LFRX" | version u16 | dim u32 | model_id (u16 len + utf8)
    | record count u64
    | record table: count fixed-stride entries of
        record_id u64,
        chunk_id (offset u64, len u32), doc_id (offset u64, len u32),
        text (offset u64, len u32),
        vector dim x f64
    | string heap (u64 len + bytes; offsets above index into it)
    | CRC-64 of everything before it (u64)

Strings live in the trailing heap so record entries keep a fixed stride.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedding import EmbeddingVector

MAGIC = b"LFRX"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)

# CRC-64/XZ (reflected ECMA-182 polynomial).
_CRC64_POLY = 0xC96C5795D7870F42
_CRC64_TABLE: list[int] = []
for _byte in range(256):
    _crc = _byte
    for _ in range(8):
        _crc = (_crc >> 1) ^ _CRC64_POLY if _crc & 1 else _crc >> 1
    _CRC64_TABLE.append(_crc)


def crc64(data: bytes) -> int:
    crc = 0xFFFFFFFFFFFFFFFF
    for b in data:
        crc = _CRC64_TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


class StoreError(Exception):
    """Raised on store misuse or a corrupt/incompatible store file."""


@dataclass(frozen=True)
class RecordEntry:
    """A record as submitted for insertion, before an id is assigned."""

    chunk_id: str
    doc_id: str
    vector: EmbeddingVector
    text: str


@dataclass(frozen=True)
class VectorRecord:
    record_id: int
    chunk_id: str
    doc_id: str
    vector: EmbeddingVector
    text: str


@dataclass(frozen=True)
class SearchHit:
    record_id: int
    chunk_id: str
    score: float
    text: str

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "chunk_id": self.chunk_id,
            "score": self.score,
            "text": self.text,
        }


class VectorStore:
    """In-memory flat store of unit vectors with exact top-k search.

    Append-only: no deletes or updates; re-ingestion builds a fresh store.
    Inserts are serialized by a lock; searches run against the latest built
    matrix snapshot. When ``autosave_path`` is set, every insert persists
    the store before returning.
    """

    def __init__(self, dim: int, model_id: str, autosave_path: Path | None = None):
        if dim <= 0:
            raise StoreError("dim must be positive")
        self.dim = dim
        self.model_id = model_id
        self.autosave_path = Path(autosave_path) if autosave_path else None
        self._chunk_ids: list[str] = []
        self._doc_ids: list[str] = []
        self._texts: list[str] = []
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray = np.empty((0, dim), dtype=np.float64)
        self._dirty = False
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._chunk_ids)

    @property
    def count(self) -> int:
        return len(self._chunk_ids)

    def doc_ids(self) -> set[str]:
        return set(self._doc_ids)

    def insert(self, entries: Sequence[RecordEntry]) -> list[int]:
        """Append records; returns the dense, increasing ids assigned."""
        for entry in entries:
            vec = entry.vector
            if vec.dim != self.dim:
                raise StoreError(f"dimension mismatch: expected {self.dim}, got {vec.dim}")
            if vec.model_id != self.model_id:
                raise StoreError(
                    f"model drift: store holds {self.model_id!r}, record uses {vec.model_id!r}"
                )
        with self._lock:
            first = len(self._chunk_ids)
            for entry in entries:
                self._chunk_ids.append(entry.chunk_id)
                self._doc_ids.append(entry.doc_id)
                self._texts.append(entry.text)
                self._rows.append(np.asarray(entry.vector.values, dtype=np.float64))
            self._dirty = True
            ids = list(range(first, len(self._chunk_ids)))
            if self.autosave_path is not None:
                self.save(self.autosave_path)
            return ids

    def record(self, record_id: int) -> VectorRecord:
        if not 0 <= record_id < len(self._chunk_ids):
            raise StoreError(f"no record {record_id}")
        self._ensure_matrix()
        return VectorRecord(
            record_id=record_id,
            chunk_id=self._chunk_ids[record_id],
            doc_id=self._doc_ids[record_id],
            vector=EmbeddingVector(self._matrix[record_id], self.dim, self.model_id),
            text=self._texts[record_id],
        )

    def _ensure_matrix(self) -> np.ndarray:
        with self._lock:
            if self._dirty:
                self._matrix = (
                    np.vstack(self._rows)
                    if self._rows
                    else np.empty((0, self.dim), dtype=np.float64)
                )
                self._matrix.setflags(write=False)
                self._dirty = False
            return self._matrix

    def search(self, query: EmbeddingVector, k: int, doc_id: str | None = None) -> list[SearchHit]:
        """Exact cosine top-k over all records (optionally one document).

        Hits come back by descending score, ties by ascending record id;
        fewer than k hits when the store is smaller.
        """
        if k <= 0:
            raise StoreError("k must be positive")
        if query.dim != self.dim:
            raise StoreError(f"dimension mismatch: expected {self.dim}, got {query.dim}")
        matrix = self._ensure_matrix()
        n = matrix.shape[0]
        if n == 0:
            return []

        scores = matrix @ query.values
        candidates = np.arange(n)
        if doc_id is not None:
            mask = np.fromiter(
                (d == doc_id for d in self._doc_ids), dtype=bool, count=n
            )
            candidates = candidates[mask]
            scores = scores[mask]
            if candidates.size == 0:
                return []

        # lexsort: primary key last -> descending score, then ascending id.
        order = np.lexsort((candidates, -scores))[:k]
        hits = []
        for pos in order:
            rid = int(candidates[pos])
            score = min(1.0, max(-1.0, float(scores[pos])))
            hits.append(
                SearchHit(
                    record_id=rid,
                    chunk_id=self._chunk_ids[rid],
                    score=score,
                    text=self._texts[rid],
                )
            )
        return hits

    def clone(self) -> "VectorStore":
        """Independent copy, used for copy-on-write snapshot swaps."""
        with self._lock:
            dup = VectorStore(self.dim, self.model_id, autosave_path=self.autosave_path)
            dup._chunk_ids = list(self._chunk_ids)
            dup._doc_ids = list(self._doc_ids)
            dup._texts = list(self._texts)
            dup._rows = [row.copy() for row in self._rows]
            dup._dirty = True
            return dup

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Path | str) -> None:
        """Serialize to the versioned binary format, atomically."""
        path = Path(path)
        with self._lock:
            matrix = self._ensure_matrix()
            heap = bytearray()
            offsets: list[tuple[int, int, int, int, int, int]] = []
            for i in range(len(self._chunk_ids)):
                entry = []
                for s in (self._chunk_ids[i], self._doc_ids[i], self._texts[i]):
                    raw = s.encode("utf-8")
                    entry.extend((len(heap), len(raw)))
                    heap.extend(raw)
                offsets.append(tuple(entry))

            model_raw = self.model_id.encode("utf-8")
            out = bytearray()
            out += MAGIC
            out += struct.pack("<HI", FORMAT_VERSION, self.dim)
            out += struct.pack("<H", len(model_raw)) + model_raw
            out += struct.pack("<Q", len(self._chunk_ids))
            for i, (c_off, c_len, d_off, d_len, t_off, t_len) in enumerate(offsets):
                out += struct.pack("<QQIQIQI", i, c_off, c_len, d_off, d_len, t_off, t_len)
                out += matrix[i].tobytes()
            out += struct.pack("<Q", len(heap)) + bytes(heap)
            out += struct.pack("<Q", crc64(bytes(out)))

        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(bytes(out))
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path | str) -> "VectorStore":
        """Read a store file back; search results are bit-identical to the
        store that was saved."""
        path = Path(path)
        blob = path.read_bytes()
        if len(blob) < 8:
            raise StoreError(f"corrupt store: {path} is too short")
        body, (stored_crc,) = blob[:-8], struct.unpack("<Q", blob[-8:])
        if crc64(body) != stored_crc:
            raise StoreError(f"corrupt store: checksum mismatch in {path}")

        view = memoryview(body)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise StoreError(f"corrupt store: truncated header in {path}")
            chunk = view[pos : pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != MAGIC:
            raise StoreError(f"{path} is not a vector store (bad magic)")
        version, dim = struct.unpack("<HI", take(6))
        if version not in SUPPORTED_VERSIONS:
            raise StoreError(
                f"{path} has format version {version}; supported: {SUPPORTED_VERSIONS}"
            )
        (model_len,) = struct.unpack("<H", take(2))
        model_id = bytes(take(model_len)).decode("utf-8")
        (count,) = struct.unpack("<Q", take(8))

        entry_fixed = struct.calcsize("<QQIQIQI")
        stride = entry_fixed + dim * 8
        table = take(stride * count)
        (heap_len,) = struct.unpack("<Q", take(8))
        heap = bytes(take(heap_len))

        store = cls(dim, model_id)
        for i in range(count):
            base = i * stride
            rid, c_off, c_len, d_off, d_len, t_off, t_len = struct.unpack_from(
                "<QQIQIQI", table, base
            )
            if rid != i:
                raise StoreError(f"corrupt store: record id {rid} at position {i}")
            vec = np.frombuffer(table, dtype="<f8", count=dim, offset=base + entry_fixed)
            store._chunk_ids.append(heap[c_off : c_off + c_len].decode("utf-8"))
            store._doc_ids.append(heap[d_off : d_off + d_len].decode("utf-8"))
            store._texts.append(heap[t_off : t_off + t_len].decode("utf-8"))
            store._rows.append(np.array(vec, dtype=np.float64))
        store._dirty = True
        return store
