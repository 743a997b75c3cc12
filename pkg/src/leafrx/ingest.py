"""Knowledge-base ingestion: normalize documents and split them into
ordered, overlapping character chunks ready for embedding.

Chunking is character-based and deterministic: chunk N covers
``[N * stride, N * stride + chunk_chars)`` with ``stride = chunk_chars -
overlap_chars``, so dropping each non-first chunk's leading overlap and
concatenating reproduces the document body byte-for-byte.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

DEFAULT_CHUNK_CHARS = 1000
DEFAULT_OVERLAP_CHARS = 200

KNOWLEDGE_SUFFIXES = {".txt", ".md"}


class IngestError(ValueError):
    """Raised when a document cannot be normalized or chunked."""


class EncodingError(IngestError):
    """Input bytes are not valid UTF-8."""

    def __init__(self, byte_offset: int):
        self.byte_offset = byte_offset
        super().__init__(f"invalid UTF-8 sequence at byte offset {byte_offset}")


@dataclass(frozen=True)
class KnowledgeDocument:
    """A normalized knowledge-base document."""

    doc_id: str
    title: str
    body: str
    source_uri: str
    ingested_at: int  # unix seconds, UTC

    def __post_init__(self):
        if not self.doc_id:
            raise IngestError("doc_id must be non-empty")
        if not self.body.strip():
            raise IngestError("empty document")


@dataclass(frozen=True)
class DocumentChunk:
    """A contiguous span of a document body.

    ``text`` always equals ``body[char_start:char_end]`` of the source
    document; ordinals are dense from 0 within a document.
    """

    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_start: int
    char_end: int


@dataclass
class CorpusSummary:
    """Per-batch outcome of an ingestion run."""

    added: int = 0
    chunks: int = 0
    failed: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)  # (source, reason)

    def record_failure(self, source: str, reason: str) -> None:
        self.failed += 1
        self.failures.append((source, reason))

    def to_dict(self) -> dict:
        return {
            "added": self.added,
            "chunks": self.chunks,
            "failed": self.failed,
            "failures": [{"source": s, "reason": r} for s, r in self.failures],
        }


def decode_utf8(raw: bytes) -> str:
    """Decode bytes as UTF-8, reporting the byte offset of the first bad sequence."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(exc.start) from exc


def normalize_text(raw: str) -> str:
    """Unify line endings to LF, strip trailing spaces, collapse blank runs.

    Runs of more than one blank line collapse to a single blank line.
    Leading whitespace is preserved. Idempotent.
    """
    lines = raw.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    lines = [line.rstrip() for line in lines]

    out: list[str] = []
    blank_run = 0
    for line in lines:
        if line == "":
            blank_run += 1
            if blank_run > 1:
                continue
        else:
            blank_run = 0
        out.append(line)
    return "\n".join(out)


def chunk_document(
    doc: KnowledgeDocument,
    chunk_chars: int = DEFAULT_CHUNK_CHARS,
    overlap_chars: int = DEFAULT_OVERLAP_CHARS,
) -> list[DocumentChunk]:
    """Split a document body into overlapping chunks.

    Every chunk except possibly the last has length ``chunk_chars``;
    consecutive chunks overlap by exactly ``overlap_chars``.
    """
    if chunk_chars <= 0:
        raise IngestError("chunk_chars must be positive")
    if overlap_chars < 0:
        raise IngestError("overlap_chars must be nonnegative")
    if overlap_chars >= chunk_chars:
        raise IngestError("degenerate stride: overlap must be smaller than chunk size")

    body = doc.body
    if not body:
        raise IngestError("empty document")

    stride = chunk_chars - overlap_chars
    chunks: list[DocumentChunk] = []
    start = 0
    ordinal = 0
    while True:
        end = min(start + chunk_chars, len(body))
        chunks.append(
            DocumentChunk(
                chunk_id=f"{doc.doc_id}#{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=body[start:end],
                char_start=start,
                char_end=end,
            )
        )
        if start + chunk_chars >= len(body):
            break
        start += stride
        ordinal += 1
    return chunks


def reconstruct_body(chunks: Sequence[DocumentChunk], overlap_chars: int) -> str:
    """Rebuild a document body from its chunks (reconstruction oracle helper)."""
    parts = []
    for i, chunk in enumerate(chunks):
        parts.append(chunk.text if i == 0 else chunk.text[overlap_chars:])
    return "".join(parts)


def load_document(path: Path, doc_id: str | None = None, title: str | None = None,
                  source_uri: str | None = None) -> KnowledgeDocument:
    """Read, decode and normalize one document file."""
    raw = path.read_bytes()
    body = normalize_text(decode_utf8(raw))
    if not body.strip():
        raise IngestError("empty document")
    return KnowledgeDocument(
        doc_id=doc_id or path.stem,
        title=title or path.stem,
        body=body,
        source_uri=source_uri or str(path),
        ingested_at=int(time.time()),
    )


def read_manifest(path: Path) -> list[dict]:
    """Read a JSON Lines corpus manifest: one object per document.

    Each object carries doc_id, title, path, source_uri; path is resolved
    relative to the manifest file.
    """
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"manifest line {lineno}: invalid JSON: {exc}") from exc
        for key in ("doc_id", "path"):
            if key not in obj:
                raise IngestError(f"manifest line {lineno}: missing '{key}'")
        obj["path"] = str((path.parent / obj["path"]).resolve())
        entries.append(obj)
    return entries


def expand_paths(paths: Iterable[Path]) -> list[Path]:
    """Expand directories into their .txt/.md files, sorted for determinism."""
    out: list[Path] = []
    for p in paths:
        if p.is_dir():
            out.extend(sorted(q for q in p.rglob("*") if q.suffix in KNOWLEDGE_SUFFIXES))
        else:
            out.append(p)
    return out


ChunkSink = Callable[[KnowledgeDocument, "list[DocumentChunk]"], None]


def ingest_corpus(
    paths: Sequence[Path],
    chunk_chars: int = DEFAULT_CHUNK_CHARS,
    overlap_chars: int = DEFAULT_OVERLAP_CHARS,
    sink: ChunkSink | None = None,
    manifest: Path | None = None,
) -> CorpusSummary:
    """Normalize, chunk and forward a batch of document files.

    One file failing (unreadable, empty, bad encoding) never aborts the
    batch; every per-file outcome lands in the returned summary. ``sink``
    receives each successfully chunked document, typically to embed and
    store it.
    """
    summary = CorpusSummary()
    seen_ids: set[str] = set()

    plan: list[tuple[Path, dict]] = []
    if manifest is not None:
        for entry in read_manifest(manifest):
            plan.append((Path(entry["path"]), entry))
    for p in expand_paths(paths):
        plan.append((p, {}))

    for path, meta in plan:
        source = str(path)
        try:
            doc = load_document(
                path,
                doc_id=meta.get("doc_id"),
                title=meta.get("title"),
                source_uri=meta.get("source_uri"),
            )
            if doc.doc_id in seen_ids:
                raise IngestError(f"duplicate doc_id '{doc.doc_id}'")
            chunks = chunk_document(doc, chunk_chars, overlap_chars)
            if sink is not None:
                sink(doc, chunks)
        except (OSError, IngestError) as exc:
            reason = str(exc) if not isinstance(exc, OSError) else f"unreadable: {exc.strerror}"
            summary.record_failure(source, reason)
            continue
        seen_ids.add(doc.doc_id)
        summary.added += 1
        summary.chunks += len(chunks)
    return summary
