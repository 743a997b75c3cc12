"""Tests for text normalization, chunking and corpus ingestion."""

from __future__ import annotations

import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leafrx.ingest import (
    CorpusSummary,
    DocumentChunk,
    EncodingError,
    IngestError,
    KnowledgeDocument,
    chunk_document,
    decode_utf8,
    ingest_corpus,
    normalize_text,
    read_manifest,
)


def make_doc(body: str, doc_id: str = "doc") -> KnowledgeDocument:
    return KnowledgeDocument(doc_id=doc_id, title=doc_id, body=body,
                             source_uri="test", ingested_at=int(time.time()))


def strip_overlap_concat(chunks: list[DocumentChunk], overlap: int) -> str:
    """Independent reconstruction oracle: drop each non-first chunk's leading
    overlap and concatenate."""
    out = []
    for i, chunk in enumerate(chunks):
        out.append(chunk.text if i == 0 else chunk.text[overlap:])
    return "".join(out)


# ----------------------------------------------------------------------
# normalize_text
# ----------------------------------------------------------------------


class TestNormalizeText:
    def test_crlf_unified(self):
        assert normalize_text("a\r\nb") == "a\nb"

    def test_bare_cr_unified(self):
        assert normalize_text("a\rb") == "a\nb"

    def test_blank_runs_collapsed(self):
        assert normalize_text("a\n\n\n\nb") == "a\n\nb"

    def test_trailing_spaces_removed(self):
        assert normalize_text("a  \nb\t") == "a\nb"

    def test_leading_whitespace_preserved(self):
        assert normalize_text("  indented\n\tcode") == "  indented\n\tcode"

    def test_already_normalized_is_identity(self):
        text = "alpha\n\nbeta\ngamma"
        assert normalize_text(text) == text

    @given(st.text(max_size=500))
    def test_idempotent(self, raw):
        once = normalize_text(raw)
        assert normalize_text(once) == once

    def test_decode_rejects_invalid_utf8_with_offset(self):
        with pytest.raises(EncodingError) as exc_info:
            decode_utf8(b"ok\xff\xfe")
        assert exc_info.value.byte_offset == 2
        assert "byte offset 2" in str(exc_info.value)


# ----------------------------------------------------------------------
# chunk_document
# ----------------------------------------------------------------------


class TestChunkDocument:
    def test_stride_spans(self):
        doc = make_doc("x" * 2500)
        chunks = chunk_document(doc, chunk_chars=1000, overlap_chars=200)
        spans = [(c.char_start, c.char_end) for c in chunks]
        assert spans == [(0, 1000), (800, 1800), (1600, 2500)]

    def test_body_shorter_than_chunk(self):
        doc = make_doc("y" * 500)
        chunks = chunk_document(doc, chunk_chars=1000, overlap_chars=200)
        assert [(c.char_start, c.char_end) for c in chunks] == [(0, 500)]

    def test_exact_multiple_has_no_empty_tail(self):
        doc = make_doc("z" * 1000)
        chunks = chunk_document(doc, chunk_chars=1000, overlap_chars=200)
        assert len(chunks) == 1

    def test_offset_fidelity_and_dense_ordinals(self):
        body = "".join(chr(ord("a") + (i % 26)) for i in range(3301))
        doc = make_doc(body)
        chunks = chunk_document(doc, chunk_chars=700, overlap_chars=150)
        for i, chunk in enumerate(chunks):
            assert chunk.ordinal == i
            assert chunk.chunk_id == f"doc#{i}"
            assert chunk.text == body[chunk.char_start:chunk.char_end]

    def test_reconstruction_random_body(self):
        import random

        rng = random.Random(1234)
        body = "".join(rng.choice("abcdefghij \n") for _ in range(10_000))
        body = normalize_text(body) or "fallback"
        doc = make_doc(body)
        chunks = chunk_document(doc, chunk_chars=1000, overlap_chars=200)
        assert strip_overlap_concat(chunks, 200) == body

    def test_empty_body_rejected(self):
        with pytest.raises(IngestError, match="empty document"):
            make_doc("   ")

    def test_degenerate_stride_rejected(self):
        doc = make_doc("abc")
        with pytest.raises(IngestError, match="degenerate stride"):
            chunk_document(doc, chunk_chars=100, overlap_chars=100)

    def test_determinism(self):
        doc = make_doc("q" * 4321)
        a = chunk_document(doc, 500, 100)
        b = chunk_document(doc, 500, 100)
        assert a == b

    @given(
        body=st.text(alphabet=st.characters(blacklist_categories=("Cs",)),
                     min_size=1, max_size=4000).filter(lambda s: s.strip()),
        chunk_chars=st.integers(min_value=2, max_value=900),
        overlap=st.integers(min_value=0, max_value=899),
    )
    @settings(max_examples=60, deadline=None)
    def test_reconstruction_property(self, body, chunk_chars, overlap):
        overlap = overlap % chunk_chars
        doc = make_doc(normalize_text(body) or "x")
        chunks = chunk_document(doc, chunk_chars, overlap)
        assert strip_overlap_concat(chunks, overlap) == doc.body
        assert all(len(c.text) == chunk_chars for c in chunks[:-1])
        assert all(c.text == doc.body[c.char_start:c.char_end] for c in chunks)


# ----------------------------------------------------------------------
# ingest_corpus
# ----------------------------------------------------------------------


class TestIngestCorpus:
    def _write(self, tmp_path, name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_happy_path(self, tmp_path):
        paths = [self._write(tmp_path, f"d{i}.txt", f"document {i} body") for i in range(3)]
        summary = ingest_corpus(paths)
        assert (summary.added, summary.failed) == (3, 0)
        assert summary.chunks == 3

    def test_missing_file_recorded_not_raised(self, tmp_path):
        good = [self._write(tmp_path, f"d{i}.txt", "body text") for i in range(2)]
        missing = tmp_path / "nope.txt"
        summary = ingest_corpus(good + [missing])
        assert (summary.added, summary.failed) == (2, 1)
        assert summary.failures[0][0] == str(missing)

    def test_empty_file_counts_as_failure(self, tmp_path):
        paths = [
            self._write(tmp_path, "ok.txt", "content"),
            self._write(tmp_path, "empty.txt", ""),
        ]
        summary = ingest_corpus(paths)
        assert (summary.added, summary.failed) == (1, 1)
        assert "empty document" in summary.failures[0][1]

    def test_duplicate_doc_id_fails_second_file(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir(), b.mkdir()
        p1 = self._write(a, "same.txt", "first body")
        p2 = self._write(b, "same.txt", "second body")
        summary = ingest_corpus([p1, p2])
        assert (summary.added, summary.failed) == (1, 1)
        assert "duplicate doc_id" in summary.failures[0][1]

    def test_sink_receives_normalized_chunked_docs(self, tmp_path):
        path = self._write(tmp_path, "doc.md", "line one\r\n\r\n\r\nline two")
        seen = []
        ingest_corpus([path], sink=lambda doc, chunks: seen.append((doc, chunks)))
        assert len(seen) == 1
        doc, chunks = seen[0]
        assert doc.body == "line one\n\nline two"
        assert chunks[0].text == doc.body

    def test_directory_expansion(self, corpus_dir):
        summary = ingest_corpus([corpus_dir])
        assert summary.added == 3

    def test_manifest(self, tmp_path):
        self._write(tmp_path, "raw.txt", "manifest-driven body")
        manifest = tmp_path / "corpus.jsonl"
        manifest.write_text(
            '{"doc_id": "m1", "title": "Manifest Doc", "path": "raw.txt", '
            '"source_uri": "s3://kb/raw.txt"}\n'
        )
        docs = []
        summary = ingest_corpus([], manifest=manifest,
                                sink=lambda doc, chunks: docs.append(doc))
        assert summary.added == 1
        assert docs[0].doc_id == "m1"
        assert docs[0].source_uri == "s3://kb/raw.txt"

    def test_manifest_missing_key(self, tmp_path):
        manifest = tmp_path / "bad.jsonl"
        manifest.write_text('{"title": "no id or path"}\n')
        with pytest.raises(IngestError, match="missing 'doc_id'"):
            read_manifest(manifest)

    def test_summary_dict_shape(self):
        summary = CorpusSummary(added=1, chunks=2, failed=1,
                                failures=[("x.txt", "empty document")])
        assert summary.to_dict() == {
            "added": 1,
            "chunks": 2,
            "failed": 1,
            "failures": [{"source": "x.txt", "reason": "empty document"}],
        }
