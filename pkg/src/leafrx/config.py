"""Service configuration with environment overrides.

Environment variables:
    LEAFRX_API_KEY         API key required on HTTP requests (unset = open)
    LEAFRX_EMBED_ENDPOINT  switches embedding to the remote backend
    LEAFRX_EMBED_MODEL     remote embedding model id
    LEAFRX_EMBED_DIM       remote embedding dimension
    LEAFRX_EMBED_API_KEY   bearer token for the embeddings endpoint
    LEAFRX_LLM_ENDPOINT    switches generation to the remote backend
    LEAFRX_LLM_MODEL       remote chat model id
    LEAFRX_LLM_API_KEY     bearer token for the chat endpoint
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import DEFAULT_LOCAL_DIM, EmbeddingBackendConfig
from .ingest import DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS
from .rag import (
    DEFAULT_GROUNDING_TAU,
    DEFAULT_PROMPT_BUDGET,
    DEFAULT_RETRIEVAL_K,
    ChatBackendConfig,
)

DEFAULT_REMOTE_EMBED_DIM = 1536


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    store_path: Path | None = None
    embed_cfg: EmbeddingBackendConfig = field(default_factory=EmbeddingBackendConfig)
    llm_cfg: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    grounding_tau: float = DEFAULT_GROUNDING_TAU
    prompt_budget_tokens: int = DEFAULT_PROMPT_BUDGET
    confidence_floor: float = 0.25
    chunk_chars: int = DEFAULT_CHUNK_CHARS
    overlap_chars: int = DEFAULT_OVERLAP_CHARS
    session_ttl_seconds: float = 3600.0
    max_concurrency: int = 32
    api_key: str | None = None

    def __post_init__(self):
        if not 0.0 < self.grounding_tau < 1.0:
            raise ValueError("grounding_tau must be in (0, 1)")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be at least 1")


def embed_config_from_env(dim: int | None = None, seed: int = 0) -> EmbeddingBackendConfig:
    """Remote backend when LEAFRX_EMBED_ENDPOINT is set, local hashing otherwise."""
    endpoint = os.environ.get("LEAFRX_EMBED_ENDPOINT")
    if endpoint:
        return EmbeddingBackendConfig(
            kind="remote",
            endpoint_url=endpoint,
            model_id=os.environ.get("LEAFRX_EMBED_MODEL", "text-embedding-3-small"),
            dim=dim or int(os.environ.get("LEAFRX_EMBED_DIM", DEFAULT_REMOTE_EMBED_DIM)),
        )
    return EmbeddingBackendConfig(kind="local_hash", dim=dim or DEFAULT_LOCAL_DIM, seed=seed)


def llm_config_from_env() -> ChatBackendConfig:
    """Remote backend when LEAFRX_LLM_ENDPOINT is set, the echo stub otherwise."""
    endpoint = os.environ.get("LEAFRX_LLM_ENDPOINT")
    if endpoint:
        return ChatBackendConfig(
            kind="remote",
            endpoint_url=endpoint,
            model_id=os.environ.get("LEAFRX_LLM_MODEL", "gpt-3.5-turbo"),
        )
    return ChatBackendConfig(kind="stub_echo")


def config_from_env(store_path: Path | None = None, **overrides) -> ServiceConfig:
    cfg = ServiceConfig(
        store_path=store_path,
        embed_cfg=embed_config_from_env(),
        llm_cfg=llm_config_from_env(),
        api_key=os.environ.get("LEAFRX_API_KEY"),
    )
    for name, value in overrides.items():
        if value is not None:
            setattr(cfg, name, value)
    return cfg
