"""Shared fixtures: the offline fixture corpus, stores and engines built on
the deterministic local backends (no network anywhere in the suite)."""

from __future__ import annotations

import pytest

from leafrx.config import ServiceConfig
from leafrx.embedding import Embedder, EmbeddingBackendConfig
from leafrx.rag import ChatBackendConfig, RagEngine
from leafrx.store import RecordEntry, VectorStore

FIXTURE_DIM = 256
FIXTURE_SEED = 0

# Three-document remediation corpus. Each document is shorter than one chunk,
# so doc "<id>" yields exactly chunk "<id>#0".
PHOMA_DOC = (
    "Remove infected leaves and prune shaded branches. Phoma leaf spot on coffee: "
    "phoma treatment and remediation requires removing infected leaves. Always remove "
    "infected leaves. Phoma spreads in wet shade."
)
MINER_DOC = (
    "Release parasitoid wasps against the coffee leaf miner. Leaf miner treatment and "
    "remediation on coffee: miner larvae tunnel leaves, so release parasitoid wasps "
    "beside sticky traps. Miner moths avoid shade."
)
IRRIGATION_DOC = (
    "Irrigation scheduling for coffee fields: water deeply twice weekly in dry season. "
    "Drip irrigation conserves water. Irrigation timing matters at dawn."
)

FIXTURE_CORPUS = {
    "phoma-remediation": PHOMA_DOC,
    "miner-remediation": MINER_DOC,
    "irrigation-guide": IRRIGATION_DOC,
}

PHOMA_REPORT_JSON = (
    b'{"image_id":"leaf-042","detector":{"name":"yolov8-seg","version":"8.1"},'
    b'"findings":[{"label":"Phoma","confidence":0.91,"bbox":[0.1,0.2,0.3,0.4]}]}'
)


def local_embed_config(dim: int = FIXTURE_DIM, seed: int = FIXTURE_SEED) -> EmbeddingBackendConfig:
    return EmbeddingBackendConfig(kind="local_hash", dim=dim, seed=seed)


def build_fixture_store(dim: int = FIXTURE_DIM, seed: int = FIXTURE_SEED) -> VectorStore:
    embedder = Embedder(local_embed_config(dim, seed))
    store = VectorStore(dim, "local-hash-v1")
    entries = []
    for doc_id, text in FIXTURE_CORPUS.items():
        vector = embedder.embed_text(text)
        entries.append(RecordEntry(chunk_id=f"{doc_id}#0", doc_id=doc_id,
                                   vector=vector, text=text))
    store.insert(entries)
    return store


@pytest.fixture()
def embedder():
    return Embedder(local_embed_config())


@pytest.fixture()
def fixture_store():
    return build_fixture_store()


@pytest.fixture()
def engine(fixture_store, embedder):
    return RagEngine(
        store=fixture_store,
        embedder=embedder,
        llm_cfg=ChatBackendConfig(kind="stub_echo"),
    )


@pytest.fixture()
def stub_service_config(tmp_path):
    return ServiceConfig(
        store_path=tmp_path / "fixture.store",
        embed_cfg=local_embed_config(),
        llm_cfg=ChatBackendConfig(kind="stub_echo"),
    )


@pytest.fixture()
def corpus_dir(tmp_path):
    """Fixture corpus written out as .md files for path-based ingestion."""
    root = tmp_path / "corpus"
    root.mkdir()
    for doc_id, text in FIXTURE_CORPUS.items():
        (root / f"{doc_id}.md").write_text(text, encoding="utf-8")
    return root
