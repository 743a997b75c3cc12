"""Embedding backends: a remote OpenAI-compatible client and a deterministic
local hashing embedder.

Every vector leaving this module is unit L2-normalized (within 1e-6), so
downstream cosine similarity reduces to a dot product. The local backend is a
pure function of (text, dim, seed) and exists so the whole pipeline runs
offline and reproducibly; it hashes lowercase alphanumeric tokens into signed
buckets and normalizes the accumulated counts.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from hashlib import blake2b

import numpy as np
import requests

LOCAL_MODEL_ID = "local-hash-v1"
DEFAULT_LOCAL_DIM = 256

ENV_API_KEY = "LEAFRX_EMBED_API_KEY"

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 0.5
RETRYABLE_STATUS = {429} | set(range(500, 600))

NORM_TOLERANCE = 1e-6

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class EmbeddingError(Exception):
    """Raised when embedding fails or a backend misbehaves."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-normalized embedding with provenance."""

    values: np.ndarray
    dim: int
    model_id: str

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if arr.shape != (self.dim,):
            raise EmbeddingError(f"vector has {arr.shape[0]} components, expected {self.dim}")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError("vector has non-finite components")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise EmbeddingError(f"vector norm {norm!r} is not 1.0 within {NORM_TOLERANCE}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.model_id == other.model_id
            and np.array_equal(self.values, other.values)
        )


@dataclass
class EmbeddingBackendConfig:
    """Which embedder to use and how to reach it."""

    kind: str = "local_hash"  # "remote" or "local_hash"
    endpoint_url: str = ""
    model_id: str = LOCAL_MODEL_ID
    dim: int = DEFAULT_LOCAL_DIM
    timeout: float = 30.0
    max_batch: int = 64
    seed: int = 0  # local backend only
    max_inflight: int = 4  # remote backend only

    def __post_init__(self):
        if self.kind not in ("remote", "local_hash"):
            raise ValueError(f"unknown embedding backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote embedding backend requires endpoint_url")
        if self.dim <= 0 or self.max_batch <= 0:
            raise ValueError("dim and max_batch must be positive")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def _token_hash(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def local_hash_embed(text: str, dim: int = DEFAULT_LOCAL_DIM, seed: int = 0) -> EmbeddingVector:
    """Deterministic bag-of-tokens hash embedding.

    Each token maps to a bucket (low bits of its seeded 64-bit hash) and a
    sign (top bit); bucket accumulations are L2-normalized. Bit-identical
    output for identical (text, dim, seed).
    """
    if dim < 8:
        raise EmbeddingError("dim must be at least 8")
    tokens = tokenize(text)
    if not tokens:
        raise EmbeddingError("no tokens")

    acc = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        h = _token_hash(token, seed)
        bucket = h % dim
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        acc[bucket] += sign

    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        # Opposite-signed collisions cancelled every bucket; zero vectors are forbidden.
        raise EmbeddingError("degenerate embedding: token hashes cancelled out")
    return EmbeddingVector(values=acc / norm, dim=dim, model_id=LOCAL_MODEL_ID)


class RemoteEmbeddingClient:
    """Client for an OpenAI-compatible embeddings endpoint.

    Retries timeouts and 429/5xx responses up to RETRY_ATTEMPTS with
    exponential backoff; anything else fails fast. A semaphore caps
    concurrent in-flight requests.
    """

    def __init__(self, cfg: EmbeddingBackendConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()
        self._inflight = threading.Semaphore(cfg.max_inflight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(ENV_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, payload: dict) -> dict:
        url = self.cfg.endpoint_url.rstrip("/") + "/embeddings"
        delay = RETRY_BACKOFF_SECONDS
        last_status: int | None = None
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            try:
                with self._inflight:
                    resp = self.session.post(
                        url, json=payload, headers=self._headers(), timeout=self.cfg.timeout
                    )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_status = None
                if attempt == RETRY_ATTEMPTS:
                    raise EmbeddingError(
                        f"embedding request failed after {attempt} attempts: {exc}",
                        attempts=attempt,
                    ) from exc
            else:
                if resp.status_code == 200:
                    return resp.json()
                last_status = resp.status_code
                if resp.status_code not in RETRYABLE_STATUS or attempt == RETRY_ATTEMPTS:
                    raise EmbeddingError(
                        f"embedding endpoint returned HTTP {resp.status_code} "
                        f"after {attempt} attempt(s)",
                        status=resp.status_code,
                        attempts=attempt,
                    )
            time.sleep(delay)
            delay *= 2
        raise EmbeddingError("embedding retries exhausted", status=last_status,
                             attempts=RETRY_ATTEMPTS)

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        data = self._post({"model": self.cfg.model_id, "input": list(texts)})
        items = sorted(data.get("data", []), key=lambda item: item["index"])
        if len(items) != len(texts):
            raise EmbeddingError(
                f"endpoint returned {len(items)} embeddings for {len(texts)} inputs"
            )
        vectors = []
        for item in items:
            raw = np.asarray(item["embedding"], dtype=np.float64)
            if raw.shape != (self.cfg.dim,):
                raise EmbeddingError(
                    f"model/dimension drift: endpoint returned dim {raw.shape[0]}, "
                    f"configured dim {self.cfg.dim}"
                )
            norm = float(np.linalg.norm(raw))
            if norm == 0.0 or not np.all(np.isfinite(raw)):
                raise EmbeddingError("endpoint returned a degenerate vector")
            vectors.append(
                EmbeddingVector(values=raw / norm, dim=self.cfg.dim, model_id=self.cfg.model_id)
            )
        return vectors


@dataclass
class Embedder:
    """Order-preserving batch embedding facade over the configured backend."""

    cfg: EmbeddingBackendConfig
    _remote: RemoteEmbeddingClient | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.cfg.kind == "remote":
            self._remote = RemoteEmbeddingClient(self.cfg)

    def embed_texts(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmbeddingError("texts must be non-empty")
        if any(not t for t in texts):
            raise EmbeddingError("each text must be non-empty")

        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), self.cfg.max_batch):
            batch = texts[start : start + self.cfg.max_batch]
            if self.cfg.kind == "local_hash":
                out.extend(local_hash_embed(t, self.cfg.dim, self.cfg.seed) for t in batch)
            else:
                assert self._remote is not None
                out.extend(self._remote.embed(batch))
        return out

    def embed_text(self, text: str) -> EmbeddingVector:
        return self.embed_texts([text])[0]


def embed_texts(texts: list[str], cfg: EmbeddingBackendConfig) -> list[EmbeddingVector]:
    """One vector per input text, order-preserving, split at cfg.max_batch."""
    return Embedder(cfg).embed_texts(texts)
