"""leafrx: retrieval-augmented diagnosis and remediation for coffee leaf
diseases.

Pipeline: detector reports come in, labels are canonicalized, remediation
knowledge is retrieved from an exact-cosine vector store, answers are
generated through a conversational RAG chain with a grounding guard, and
detection plus remediation fuse into one recommendation report.
"""

__version__ = "0.1.0"

from .detection import DetectionReport, DiseaseLabel, filter_labels, parse_report
from .embedding import Embedder, EmbeddingBackendConfig, EmbeddingVector, local_hash_embed
from .fusion import RecommendationReport, fuse, render_report
from .ingest import KnowledgeDocument, chunk_document, ingest_corpus, normalize_text
from .rag import ChatBackendConfig, ConversationSession, GroundedAnswer, RagEngine, build_query
from .store import SearchHit, VectorRecord, VectorStore

__all__ = [
    "ChatBackendConfig",
    "ConversationSession",
    "DetectionReport",
    "DiseaseLabel",
    "Embedder",
    "EmbeddingBackendConfig",
    "EmbeddingVector",
    "GroundedAnswer",
    "KnowledgeDocument",
    "RagEngine",
    "RecommendationReport",
    "SearchHit",
    "VectorRecord",
    "VectorStore",
    "build_query",
    "chunk_document",
    "filter_labels",
    "fuse",
    "ingest_corpus",
    "local_hash_embed",
    "normalize_text",
    "parse_report",
    "render_report",
]
