"""HTTP service: the integration layer between detector output, the
retrieval engine and clients (web console, CLI `chat`).

The CLI `diagnose` command calls the same DiagnosisService methods as the
HTTP endpoints, so both surfaces produce identical JSON for identical
config and store. Sessions live in memory with a TTL; the store is swapped
atomically when an ingestion completes, so in-flight searches keep their
snapshot.
"""

from __future__ import annotations

import hmac
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .detection import DetectionError, DetectionReport, parse_report
from .embedding import Embedder, EmbeddingError
from .fusion import RecommendationReport, fuse, report_to_dict
from .ingest import (
    CorpusSummary,
    IngestError,
    KnowledgeDocument,
    chunk_document,
    normalize_text,
)
from .rag import ConversationSession, RagEngine, RagError, Turn, build_query
from .store import RecordEntry, StoreError, VectorStore

MAX_BODY_BYTES = 10 * 1024 * 1024
API_KEY_HEADER = "x-api-key"

logger = logging.getLogger("leafrx.service")


class IngestDocument(BaseModel):
    doc_id: str
    title: str = ""
    body: str
    source_uri: str = ""


class IngestRequest(BaseModel):
    documents: list[IngestDocument]


class AskRequest(BaseModel):
    question: str


class FeedbackRequest(BaseModel):
    text: str


@dataclass
class _SessionSlot:
    session: ConversationSession
    last_access: float = field(default_factory=time.monotonic)


class DiagnosisService:
    """Application core shared by the HTTP API and the CLI."""

    def __init__(self, config: ServiceConfig, store: VectorStore | None = None):
        self.config = config
        if store is None:
            if config.store_path and config.store_path.exists():
                store = VectorStore.load(config.store_path)
            else:
                store = VectorStore(config.embed_cfg.dim, config.embed_cfg.model_id)
        if store.model_id != config.embed_cfg.model_id:
            raise StoreError(
                f"model drift: store was built with {store.model_id!r}, "
                f"configured backend is {config.embed_cfg.model_id!r}"
            )
        # A loaded store dictates the dimension (e.g. a custom local dim).
        if store.dim != config.embed_cfg.dim:
            config.embed_cfg.dim = store.dim
        self.embedder = Embedder(config.embed_cfg)
        self.store = store
        self.engine = RagEngine(
            store=self.store,
            embedder=self.embedder,
            llm_cfg=config.llm_cfg,
            retrieval_k=config.retrieval_k,
            grounding_tau=config.grounding_tau,
            prompt_budget_tokens=config.prompt_budget_tokens,
        )
        self._writer_lock = threading.Lock()
        self._sessions: dict[str, _SessionSlot] = {}
        self._sessions_lock = threading.Lock()

    # -- diagnosis -----------------------------------------------------

    def diagnose(self, report: DetectionReport) -> RecommendationReport:
        """Answer each detected disease through the RAG engine and fuse."""
        answers = {}
        for label in report.labels():
            query = build_query([label])
            ctx = self.engine.retrieve(query)
            answers[label] = self.engine.answer(ctx)
        return fuse(report, answers)

    def diagnose_raw(self, raw: bytes) -> RecommendationReport:
        report = parse_report(raw, confidence_floor=self.config.confidence_floor)
        return self.diagnose(report)

    # -- ingestion -----------------------------------------------------

    def ingest_documents(self, documents: list[IngestDocument]) -> CorpusSummary:
        """Chunk, embed and insert documents, then swap the store snapshot.

        One bad document is recorded as a failure and skipped; it never
        aborts the batch.
        """
        summary = CorpusSummary()
        with self._writer_lock:
            new_store = self.store.clone()
            known_ids = new_store.doc_ids()
            for doc_req in documents:
                try:
                    if doc_req.doc_id in known_ids:
                        raise IngestError(f"duplicate doc_id '{doc_req.doc_id}'")
                    doc = KnowledgeDocument(
                        doc_id=doc_req.doc_id,
                        title=doc_req.title or doc_req.doc_id,
                        body=normalize_text(doc_req.body),
                        source_uri=doc_req.source_uri,
                        ingested_at=int(time.time()),
                    )
                    chunks = chunk_document(doc, self.config.chunk_chars,
                                            self.config.overlap_chars)
                    vectors = self.embedder.embed_texts([c.text for c in chunks])
                    new_store.insert(
                        [
                            RecordEntry(chunk_id=c.chunk_id, doc_id=c.doc_id,
                                        vector=v, text=c.text)
                            for c, v in zip(chunks, vectors)
                        ]
                    )
                except (IngestError, EmbeddingError, StoreError) as exc:
                    summary.record_failure(doc_req.doc_id, str(exc))
                    continue
                known_ids.add(doc.doc_id)
                summary.added += 1
                summary.chunks += len(chunks)
            if self.config.store_path:
                new_store.save(self.config.store_path)
            self.store = new_store
            self.engine.store = new_store
        return summary

    # -- sessions --------------------------------------------------------

    def _purge_sessions(self) -> None:
        deadline = time.monotonic() - self.config.session_ttl_seconds
        stale = [sid for sid, slot in self._sessions.items() if slot.last_access < deadline]
        for sid in stale:
            del self._sessions[sid]

    def create_session(self) -> str:
        session_id = uuid.uuid4().hex
        with self._sessions_lock:
            self._purge_sessions()
            self._sessions[session_id] = _SessionSlot(ConversationSession(session_id))
        return session_id

    def get_session(self, session_id: str) -> ConversationSession | None:
        with self._sessions_lock:
            self._purge_sessions()
            slot = self._sessions.get(session_id)
            if slot is None:
                return None
            slot.last_access = time.monotonic()
            return slot.session

    def ask(self, session_id: str, question: str) -> Turn:
        session = self.get_session(session_id)
        if session is None:
            raise KeyError(session_id)
        # One ask at a time per session: strict turn ordering.
        self.engine.ask(session, question)
        return session.turns[-1]

    def transcript(self, session_id: str) -> dict | None:
        session = self.get_session(session_id)
        if session is None:
            return None
        return transcript_dict(session)


def transcript_dict(session: ConversationSession) -> dict:
    return {
        "session_id": session.session_id,
        "turns": [
            {
                "question": turn.question,
                "answer": turn.answer.to_dict(),
                "retrieval": turn.context.to_dict(),
            }
            for turn in session.turns
        ],
    }


def create_app(service: DiagnosisService) -> FastAPI:
    app = FastAPI(title="leafrx", version="0.1.0")
    app.state.service = service

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def guard_and_log(request: Request, call_next):
        start = time.perf_counter()

        length = request.headers.get("content-length")
        if length and int(length) > MAX_BODY_BYTES:
            return JSONResponse({"detail": "request body too large"}, status_code=413)

        expected = service.config.api_key
        if expected and request.url.path != "/healthz":
            provided = request.headers.get(API_KEY_HEADER, "")
            if not hmac.compare_digest(provided.encode(), expected.encode()):
                return JSONResponse({"detail": "invalid or missing API key"},
                                    status_code=401)

        response = await call_next(request)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        logger.info("%s %s -> %d (%.1f ms)", request.method, request.url.path,
                    response.status_code, elapsed_ms)
        return response

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "store_records": service.store.count}

    @app.post("/ingest")
    def ingest(body: IngestRequest):
        return service.ingest_documents(body.documents).to_dict()

    @app.post("/diagnose")
    async def diagnose(request: Request):
        raw = await request.body()
        try:
            report = service.diagnose_raw(raw)
        except DetectionError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except (RagError, EmbeddingError, StoreError) as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return report_to_dict(report)

    @app.post("/sessions")
    def create_session():
        return {"session_id": service.create_session()}

    @app.post("/sessions/{session_id}/ask")
    def session_ask(session_id: str, body: AskRequest):
        if not body.question.strip():
            raise HTTPException(status_code=400, detail="empty query")
        try:
            turn = service.ask(session_id, body.question)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        except RagError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return {
            "session_id": session_id,
            "answer": turn.answer.to_dict(),
            "retrieval": turn.context.to_dict(),
        }

    @app.get("/sessions/{session_id}")
    def session_transcript(session_id: str):
        transcript = service.transcript(session_id)
        if transcript is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return transcript

    @app.post("/feedback", status_code=204)
    def feedback(body: FeedbackRequest):
        # Feedback is recorded in the service log only; no storage yet.
        logger.info("feedback: %s", body.text)
        return Response(status_code=204)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the HTTP service until interrupted (graceful shutdown included)."""
    import uvicorn

    service = DiagnosisService(config)
    app = create_app(service)
    logger.info("serving on %s:%d with %d store records",
                config.listen_host, config.listen_port, service.store.count)
    uvicorn.run(
        app,
        host=config.listen_host,
        port=config.listen_port,
        limit_concurrency=config.max_concurrency,
        log_level="info",
    )
