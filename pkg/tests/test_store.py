"""Tests for the exact cosine store: search correctness against a
brute-force oracle, tie handling, and persistence fidelity."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from leafrx.embedding import EmbeddingVector
from leafrx.store import (
    FORMAT_VERSION,
    RecordEntry,
    StoreError,
    VectorStore,
    crc64,
)

DIM = 16
MODEL = "local-hash-v1"


def unit(raw) -> EmbeddingVector:
    arr = np.asarray(raw, dtype=np.float64)
    return EmbeddingVector(arr / np.linalg.norm(arr), len(arr), MODEL)


def basis(i: int, dim: int = DIM) -> EmbeddingVector:
    arr = np.zeros(dim)
    arr[i] = 1.0
    return EmbeddingVector(arr, dim, MODEL)


def entry(i: int, vec: EmbeddingVector) -> RecordEntry:
    return RecordEntry(chunk_id=f"doc#{i}", doc_id="doc", vector=vec, text=f"chunk {i}")


def random_store(rng, n: int, dim: int) -> tuple[VectorStore, np.ndarray]:
    vectors = rng.standard_normal((n, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    store = VectorStore(dim, MODEL)
    store.insert([
        RecordEntry(chunk_id=f"c#{i}", doc_id=f"d{i % 7}",
                    vector=EmbeddingVector(vectors[i], dim, MODEL), text=f"t{i}")
        for i in range(n)
    ])
    return store, vectors


def oracle_topk(vectors: np.ndarray, query: np.ndarray, k: int) -> list[int]:
    """Brute force: score every record, sort by (-score, id), take k."""
    scores = vectors @ query
    order = sorted(range(len(vectors)), key=lambda i: (-scores[i], i))
    return order[:k]


# ----------------------------------------------------------------------
# insert
# ----------------------------------------------------------------------


class TestInsert:
    def test_dense_ids_from_empty(self):
        store = VectorStore(DIM, MODEL)
        ids = store.insert([entry(i, basis(i)) for i in range(3)])
        assert ids == [0, 1, 2]

    def test_interleaved_batches_unique_ids(self):
        store = VectorStore(DIM, MODEL)
        ids_a = store.insert([entry(i, basis(i % DIM)) for i in range(5)])
        ids_b = store.insert([entry(5 + i, basis(i % DIM)) for i in range(4)])
        all_ids = ids_a + ids_b
        assert len(set(all_ids)) == 9
        assert store.count == 9
        assert all_ids == sorted(all_ids)

    def test_dimension_mismatch(self):
        store = VectorStore(DIM, MODEL)
        with pytest.raises(StoreError, match="expected 16, got 8"):
            store.insert([entry(0, basis(0, dim=8))])

    def test_model_drift(self):
        store = VectorStore(DIM, "other-model")
        with pytest.raises(StoreError, match="model drift"):
            store.insert([entry(0, basis(0))])

    def test_autosave_persists_on_insert(self, tmp_path):
        path = tmp_path / "auto.store"
        store = VectorStore(DIM, MODEL, autosave_path=path)
        store.insert([entry(0, basis(0))])
        assert VectorStore.load(path).count == 1


# ----------------------------------------------------------------------
# search
# ----------------------------------------------------------------------


class TestSearch:
    def test_self_similarity_first(self):
        rng = np.random.default_rng(5)
        store, vectors = random_store(rng, 20, DIM)
        query = EmbeddingVector(vectors[7], DIM, MODEL)
        hits = store.search(query, 3)
        assert hits[0].record_id == 7
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_scores(self):
        store = VectorStore(DIM, MODEL)
        store.insert([entry(0, basis(0)), entry(1, basis(1))])
        hits = store.search(basis(0), 2)
        assert [h.record_id for h in hits] == [0, 1]
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)
        assert hits[1].score == pytest.approx(0.0, abs=1e-12)

    def test_k_larger_than_store(self):
        store = VectorStore(DIM, MODEL)
        store.insert([entry(i, basis(i)) for i in range(4)])
        assert len(store.search(basis(0), 50)) == 4

    def test_empty_store_returns_empty(self):
        assert VectorStore(DIM, MODEL).search(basis(0), 5) == []

    def test_k_zero_rejected(self):
        with pytest.raises(StoreError, match="k must be positive"):
            VectorStore(DIM, MODEL).search(basis(0), 0)

    def test_query_dim_checked(self):
        store = VectorStore(DIM, MODEL)
        store.insert([entry(0, basis(0))])
        with pytest.raises(StoreError, match="dimension mismatch"):
            store.search(basis(0, dim=8), 1)

    def test_ties_break_by_ascending_record_id(self):
        store = VectorStore(DIM, MODEL)
        same = basis(3)
        store.insert([entry(0, basis(0)), entry(1, same), entry(2, same), entry(3, same)])
        hits = store.search(same, 3)
        assert [h.record_id for h in hits] == [1, 2, 3]

    def test_matches_oracle_medium_scale(self):
        rng = np.random.default_rng(42)
        store, vectors = random_store(rng, 200, 32)
        queries = rng.standard_normal((20, 32))
        queries /= np.linalg.norm(queries, axis=1, keepdims=True)
        for q in queries:
            for k in (1, 3, 10):
                hits = store.search(EmbeddingVector(q, 32, MODEL), k)
                assert [h.record_id for h in hits] == oracle_topk(vectors, q, k)

    def test_doc_id_filter(self):
        store = VectorStore(DIM, MODEL)
        store.insert([
            RecordEntry(chunk_id=f"x#{i}", doc_id="a" if i % 2 == 0 else "b",
                        vector=basis(i), text=f"t{i}")
            for i in range(6)
        ])
        hits = store.search(basis(0), 10, doc_id="b")
        assert all(h.record_id % 2 == 1 for h in hits)
        assert len(hits) == 3

    def test_scores_clamped_to_unit_interval(self):
        store = VectorStore(DIM, MODEL)
        v = unit(np.arange(1, DIM + 1))
        store.insert([entry(0, v)])
        assert -1.0 <= store.search(v, 1)[0].score <= 1.0


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------


class TestPersistence:
    def test_crc64_known_answer(self):
        # CRC-64/XZ check value for the standard test string.
        assert crc64(b"123456789") == 0x995DC9BBDF1939FA

    def test_round_trip_preserves_search_results(self, tmp_path):
        rng = np.random.default_rng(9)
        store, _ = random_store(rng, 100, DIM)
        path = tmp_path / "s.store"
        store.save(path)
        loaded = VectorStore.load(path)

        assert (loaded.count, loaded.dim, loaded.model_id) == (100, DIM, MODEL)
        probes = rng.standard_normal((10, DIM))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        for p in probes:
            q = EmbeddingVector(p, DIM, MODEL)
            before = store.search(q, 7)
            after = loaded.search(q, 7)
            assert before == after  # ids, order, text and bit-exact scores

    def test_round_trip_preserves_metadata(self, tmp_path):
        store = VectorStore(DIM, MODEL)
        store.insert([RecordEntry(chunk_id="kb#0", doc_id="kb",
                                  vector=basis(2), text="remove leaves — ok")])
        path = tmp_path / "m.store"
        store.save(path)
        rec = VectorStore.load(path).record(0)
        assert (rec.chunk_id, rec.doc_id, rec.text) == ("kb#0", "kb", "remove leaves — ok")

    def test_empty_store_round_trip(self, tmp_path):
        path = tmp_path / "empty.store"
        VectorStore(DIM, MODEL).save(path)
        loaded = VectorStore.load(path)
        assert loaded.count == 0
        assert loaded.search(basis(0), 3) == []

    def test_truncated_file_is_corrupt(self, tmp_path):
        path = tmp_path / "t.store"
        store = VectorStore(DIM, MODEL)
        store.insert([entry(0, basis(0))])
        store.save(path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(StoreError, match="corrupt store"):
            VectorStore.load(path)

    def test_flipped_byte_is_corrupt(self, tmp_path):
        path = tmp_path / "f.store"
        store = VectorStore(DIM, MODEL)
        store.insert([entry(0, basis(0))])
        store.save(path)
        blob = bytearray(path.read_bytes())
        blob[10] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(StoreError, match="corrupt store"):
            VectorStore.load(path)

    def test_version_mismatch_named(self, tmp_path):
        path = tmp_path / "v.store"
        VectorStore(DIM, MODEL).save(path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<H", blob, 4, FORMAT_VERSION + 1)
        body = bytes(blob[:-8])
        path.write_bytes(body + struct.pack("<Q", crc64(body)))
        with pytest.raises(StoreError, match="format version 2"):
            VectorStore.load(path)

    def test_not_a_store_file(self, tmp_path):
        path = tmp_path / "nope.store"
        body = b"GIF89a notastore"
        path.write_bytes(body + struct.pack("<Q", crc64(body)))
        with pytest.raises(StoreError, match="bad magic"):
            VectorStore.load(path)


class TestClone:
    def test_clone_is_independent(self):
        store = VectorStore(DIM, MODEL)
        store.insert([entry(0, basis(0))])
        dup = store.clone()
        dup.insert([entry(1, basis(1))])
        assert store.count == 1
        assert dup.count == 2
        assert dup.search(basis(0), 1)[0].record_id == 0
