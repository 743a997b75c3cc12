"""Retrieval-augmented remediation engine: query building, retrieval, prompt
assembly under a token budget, answer generation, and the grounding guard.

The grounding guard is the hallucination check: the answer is split into
sentences, each sentence is embedded and scored by its best cosine match
against the prompt-admitted chunks, and the mean of those maxima must clear
a threshold for the answer to count as grounded. An answer that never drew
on the retrieved context cannot pass.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field

import requests

from .detection import CANONICAL_ORDER, DiseaseLabel
from .embedding import Embedder, EmbeddingError, EmbeddingVector
from .store import SearchHit, VectorStore

DEFAULT_RETRIEVAL_K = 5
DEFAULT_GROUNDING_TAU = 0.55
DEFAULT_PROMPT_BUDGET = 3000
DEFAULT_MAX_TURNS_IN_CONTEXT = 6
MIN_PROMPT_BUDGET = 256

STUB_NO_CONTEXT_ANSWER = "No grounded context available."

SYSTEM_PREAMBLE = (
    "You are an agronomy assistant for coffee growers. Answer using only the "
    "numbered context passages provided; cite the passages you rely on by their "
    "tags, like [S1]. If the context does not cover the question, say so plainly "
    "instead of guessing."
)

ENV_LLM_API_KEY = "LEAFRX_LLM_API_KEY"

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 0.5
RETRYABLE_STATUS = {429} | set(range(500, 600))

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class RagError(Exception):
    """Raised when a retrieval/generation stage fails."""


def estimate_tokens(block: str) -> int:
    """Token estimate for one prompt block: ceil(chars / 4)."""
    return (len(block) + 3) // 4


def split_sentences(text: str) -> list[str]:
    """Split on sentence-ending punctuation followed by whitespace."""
    parts = _SENTENCE_SPLIT_RE.split(text.strip())
    return [p for p in (part.strip() for part in parts) if p]


def first_sentence(text: str) -> str:
    sentences = split_sentences(text)
    return sentences[0] if sentences else text.strip()


@dataclass(frozen=True)
class RetrievedContext:
    hits: tuple[SearchHit, ...]
    query_text: str
    query_vector: EmbeddingVector

    def to_dict(self) -> dict:
        return {
            "query_text": self.query_text,
            "hits": [hit.to_dict() for hit in self.hits],
        }


@dataclass(frozen=True)
class PromptBundle:
    system_preamble: str
    context_block: str
    question: str
    history_block: str
    estimated_tokens: int
    admitted: tuple[SearchHit, ...]  # hits whose text made it into context_block


@dataclass(frozen=True)
class GroundedAnswer:
    text: str
    citations: tuple[str, ...]  # chunk ids that were in the prompt
    grounding_score: float
    grounded: bool
    model_id: str

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "citations": list(self.citations),
            "grounding_score": self.grounding_score,
            "grounded": self.grounded,
            "model_id": self.model_id,
        }


@dataclass(frozen=True)
class Turn:
    question: str
    answer: GroundedAnswer
    context: RetrievedContext


@dataclass
class ConversationSession:
    """Append-only dialogue state; prompts see only the trailing window."""

    session_id: str
    turns: list[Turn] = field(default_factory=list)
    max_turns_in_context: int = DEFAULT_MAX_TURNS_IN_CONTEXT

    def window(self) -> list[Turn]:
        return self.turns[-self.max_turns_in_context :]


@dataclass
class ChatBackendConfig:
    """LLM backend selection: a remote chat endpoint or the offline stub."""

    kind: str = "stub_echo"  # "remote" or "stub_echo"
    endpoint_url: str = ""
    model_id: str = "stub-echo"
    temperature: float = 0.0
    timeout: float = 60.0

    def __post_init__(self):
        if self.kind not in ("remote", "stub_echo"):
            raise ValueError(f"unknown LLM backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote LLM backend requires endpoint_url")


def build_query(labels: list[DiseaseLabel], user_question: str | None = None) -> str:
    """Deterministic retrieval query from detected labels and/or a question."""
    if not labels and not user_question:
        raise RagError("empty query")
    parts = []
    if labels:
        ordered = [label for label in CANONICAL_ORDER if label in set(labels)]
        names = ", ".join(label.value for label in ordered)
        parts.append(f"Identify treatment and remediation for coffee leaf disease(s): {names}.")
    if user_question:
        parts.append(user_question)
    return " ".join(parts)


def _format_history(turns: list[Turn]) -> str:
    lines = []
    for turn in turns:
        lines.append(f"Q: {turn.question}")
        lines.append(f"A: {turn.answer.text}")
    return "\n".join(lines)


class ChatClient:
    """OpenAI-compatible chat completions client with the standard retry
    policy (3 attempts, exponential backoff, 429/5xx/timeouts only)."""

    def __init__(self, cfg: ChatBackendConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()

    def complete(self, messages: list[dict]) -> str:
        url = self.cfg.endpoint_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "messages": messages,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(ENV_LLM_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        delay = RETRY_BACKOFF_SECONDS
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            try:
                resp = self.session.post(url, json=payload, headers=headers,
                                         timeout=self.cfg.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                if attempt == RETRY_ATTEMPTS:
                    raise RagError(
                        f"chat request failed after {attempt} attempts: {exc}") from exc
            else:
                if resp.status_code == 200:
                    data = resp.json()
                    try:
                        content = data["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError) as exc:
                        raise RagError(f"malformed chat completion response: {exc}") from exc
                    if not content:
                        raise RagError("empty generation")
                    return content
                if resp.status_code not in RETRYABLE_STATUS or attempt == RETRY_ATTEMPTS:
                    raise RagError(
                        f"chat endpoint returned HTTP {resp.status_code} "
                        f"after {attempt} attempt(s)"
                    )
            time.sleep(delay)
            delay *= 2
        raise RagError("chat retries exhausted")


def generate(bundle: PromptBundle, cfg: ChatBackendConfig,
             client: ChatClient | None = None) -> str:
    """Produce the raw answer text for an assembled prompt."""
    if cfg.kind == "stub_echo":
        if not bundle.admitted:
            return STUB_NO_CONTEXT_ANSWER
        return f"Based on [S1]: {first_sentence(bundle.admitted[0].text)}"

    user_parts = [p for p in (bundle.context_block, bundle.history_block, bundle.question) if p]
    messages = [
        {"role": "system", "content": bundle.system_preamble},
        {"role": "user", "content": "\n\n".join(user_parts)},
    ]
    return (client or ChatClient(cfg)).complete(messages)


class RagEngine:
    """Wires the store, embedder and LLM backend into the ask pipeline."""

    def __init__(
        self,
        store: VectorStore,
        embedder: Embedder,
        llm_cfg: ChatBackendConfig,
        retrieval_k: int = DEFAULT_RETRIEVAL_K,
        grounding_tau: float = DEFAULT_GROUNDING_TAU,
        prompt_budget_tokens: int = DEFAULT_PROMPT_BUDGET,
    ):
        if retrieval_k < 1:
            raise ValueError("retrieval_k must be at least 1")
        if not 0.0 < grounding_tau < 1.0:
            raise ValueError("grounding_tau must be in (0, 1)")
        self.store = store
        self.embedder = embedder
        self.llm_cfg = llm_cfg
        self.chat_client = ChatClient(llm_cfg) if llm_cfg.kind == "remote" else None
        self.retrieval_k = retrieval_k
        self.grounding_tau = grounding_tau
        self.prompt_budget_tokens = prompt_budget_tokens

    def retrieve(self, query: str, k: int | None = None) -> RetrievedContext:
        """Embed the query once and run exact top-k search."""
        vector = self.embedder.embed_text(query)
        hits = self.store.search(vector, k or self.retrieval_k)
        return RetrievedContext(hits=tuple(hits), query_text=query, query_vector=vector)

    def assemble_prompt(
        self,
        ctx: RetrievedContext,
        session: ConversationSession | None = None,
        budget_tokens: int | None = None,
    ) -> PromptBundle:
        """Admit chunks greedily under the token budget, skipping any chunk
        that would overflow it (chunks are never truncated)."""
        budget = budget_tokens if budget_tokens is not None else self.prompt_budget_tokens
        if budget < MIN_PROMPT_BUDGET:
            raise RagError(f"prompt budget must be at least {MIN_PROMPT_BUDGET} tokens")

        question = ctx.query_text
        base = estimate_tokens(SYSTEM_PREAMBLE) + estimate_tokens(question)
        if base > budget:
            raise RagError("budget exhausted: preamble and question alone exceed the budget")

        # History keeps the newest turns that still fit alongside the preamble
        # and question; the window never grows past max_turns_in_context.
        window = session.window() if session is not None else []
        history_block = _format_history(window)
        while window and base + estimate_tokens(history_block) > budget:
            window = window[1:]
            history_block = _format_history(window)

        admitted: list[SearchHit] = []
        pieces: list[str] = []
        context_block = ""
        for hit in ctx.hits:
            candidate = pieces + [f"[S{len(pieces) + 1}] {hit.text}"]
            candidate_block = "\n\n".join(candidate)
            total = base + estimate_tokens(history_block) + estimate_tokens(candidate_block)
            if total > budget:
                continue
            pieces = candidate
            context_block = candidate_block
            admitted.append(hit)

        estimated = (
            estimate_tokens(SYSTEM_PREAMBLE)
            + estimate_tokens(context_block)
            + estimate_tokens(history_block)
            + estimate_tokens(question)
        )
        return PromptBundle(
            system_preamble=SYSTEM_PREAMBLE,
            context_block=context_block,
            question=question,
            history_block=history_block,
            estimated_tokens=estimated,
            admitted=tuple(admitted),
        )

    def grounding_check(self, answer: str, admitted: tuple[SearchHit, ...]) -> tuple[float, bool]:
        """Mean over answer sentences of the best cosine match against the
        admitted chunks; empty context or an unembeddable answer scores 0."""
        if not admitted:
            return 0.0, False
        sentences = split_sentences(answer)
        if not sentences:
            return 0.0, False

        chunk_vectors = self.embedder.embed_texts([hit.text for hit in admitted])
        scores = []
        for sentence in sentences:
            try:
                vec = self.embedder.embed_text(sentence)
            except EmbeddingError:
                scores.append(0.0)
                continue
            best = max(float(vec.values @ cv.values) for cv in chunk_vectors)
            scores.append(best)
        score = sum(scores) / len(scores)
        return score, score >= self.grounding_tau

    def answer(self, ctx: RetrievedContext, session: ConversationSession | None = None) -> GroundedAnswer:
        """Assemble, generate and ground-check an answer for a retrieval."""
        bundle = self._stage("assemble_prompt", self.assemble_prompt, ctx, session)
        text = self._stage("generate", generate, bundle, self.llm_cfg, self.chat_client)
        score, grounded = self._stage("grounding_check", self.grounding_check, text,
                                      bundle.admitted)
        return GroundedAnswer(
            text=text,
            citations=tuple(hit.chunk_id for hit in bundle.admitted),
            grounding_score=score,
            grounded=grounded,
            model_id=self.llm_cfg.model_id,
        )

    def ask(self, session: ConversationSession, question: str) -> GroundedAnswer:
        """One conversational turn: retrieve, prompt, generate, ground, record."""
        if not question or not question.strip():
            raise RagError("empty query")
        ctx = self._stage("retrieve", self.retrieve, question)
        answer = self.answer(ctx, session)
        session.turns.append(Turn(question=question, answer=answer, context=ctx))
        return answer

    @staticmethod
    def _stage(name: str, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:
            raise RagError(f"stage '{name}': {exc}") from exc
