"""leafrx command line: ingest knowledge documents, inspect and query the
vector store, run detection and diagnosis, serve the HTTP API, and chat.

Exit codes: 0 on success, 1 on operational errors, 2 on usage errors.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import requests

from .config import ServiceConfig, config_from_env, embed_config_from_env
from .detection import DetectionError, run_external_detector, serialize_report
from .embedding import Embedder, EmbeddingError
from .fusion import render_report
from .ingest import DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS, ingest_corpus
from .rag import RagError
from .store import RecordEntry, StoreError, VectorStore

DEFAULT_STORE = "leafrx.store"


@click.group(no_args_is_help=False)
def cli():
    """Coffee leaf disease diagnosis and remediation service."""


@cli.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True, path_type=Path))
@click.option("--chunk-chars", default=DEFAULT_CHUNK_CHARS, show_default=True,
              help="Chunk size in characters.")
@click.option("--overlap-chars", default=DEFAULT_OVERLAP_CHARS, show_default=True,
              help="Overlap between consecutive chunks.")
@click.option("--store", "store_path", default=DEFAULT_STORE, show_default=True,
              type=click.Path(path_type=Path), help="Vector store file to build or extend.")
@click.option("--manifest", type=click.Path(exists=True, path_type=Path),
              help="JSON Lines corpus manifest (doc_id, title, path, source_uri).")
@click.option("--dim", type=int, default=None, help="Embedding dimension override.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for the local hashing embedder.")
def ingest(paths, chunk_chars, overlap_chars, store_path, manifest, dim, seed):
    """Normalize, chunk and embed documents into the vector store."""
    embed_cfg = embed_config_from_env(dim=dim, seed=seed)
    embedder = Embedder(embed_cfg)

    if store_path.exists():
        store = VectorStore.load(store_path)
        if store.model_id != embed_cfg.model_id or store.dim != embed_cfg.dim:
            raise click.ClickException(
                f"store {store_path} was built with {store.model_id!r} dim {store.dim}; "
                f"configured backend is {embed_cfg.model_id!r} dim {embed_cfg.dim}"
            )
    else:
        store = VectorStore(embed_cfg.dim, embed_cfg.model_id)

    def sink(doc, chunks):
        vectors = embedder.embed_texts([c.text for c in chunks])
        store.insert(
            [RecordEntry(chunk_id=c.chunk_id, doc_id=c.doc_id, vector=v, text=c.text)
             for c, v in zip(chunks, vectors)]
        )

    summary = ingest_corpus(list(paths), chunk_chars, overlap_chars,
                            sink=sink, manifest=manifest)
    store.save(store_path)
    click.echo(
        f"added {summary.added} document(s), {summary.chunks} chunk(s), "
        f"{summary.failed} failure(s); store: {store_path} ({store.count} records)"
    )
    for source, reason in summary.failures:
        click.echo(f"  failed {source}: {reason}", err=True)


@cli.group()
def store():
    """Inspect or query a vector store file."""


@store.command()
@click.argument("path", type=click.Path(exists=True, path_type=Path))
def stats(path):
    """Print record count, dimension and embedding model of a store."""
    try:
        s = VectorStore.load(path)
    except StoreError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"records: {s.count}")
    click.echo(f"dim: {s.dim}")
    click.echo(f"model_id: {s.model_id}")


@store.command()
@click.argument("path", type=click.Path(exists=True, path_type=Path))
@click.option("--query", required=True, help="Text to embed and search for.")
@click.option("-k", "top_k", default=5, show_default=True, help="Number of hits.")
@click.option("--seed", type=int, default=0, show_default=True)
def search(path, query, top_k, seed):
    """Embed a query with the configured backend and print the top hits."""
    try:
        s = VectorStore.load(path)
        embed_cfg = embed_config_from_env(dim=s.dim, seed=seed)
        if embed_cfg.model_id != s.model_id:
            raise click.ClickException(
                f"store uses {s.model_id!r}; configured backend is {embed_cfg.model_id!r}"
            )
        vector = Embedder(embed_cfg).embed_text(query)
        hits = s.search(vector, top_k)
    except (StoreError, EmbeddingError) as exc:
        raise click.ClickException(str(exc))
    for rank, hit in enumerate(hits, 1):
        preview = hit.text.replace("\n", " ")[:80]
        click.echo(f"{rank}. {hit.chunk_id} score={hit.score:.4f} :: {preview}")
    if not hits:
        click.echo("no records in store")


@cli.command()
@click.argument("image", type=click.Path(exists=True, path_type=Path))
@click.option("--detector-cmd", required=True,
              help="Command template with an {image} placeholder; must print "
                   "DetectionReport JSON on stdout.")
@click.option("--timeout", default=120.0, show_default=True)
def detect(image, detector_cmd, timeout):
    """Run the external detector on an image and print the parsed report."""
    try:
        report = run_external_detector(str(image), detector_cmd, timeout=timeout)
    except DetectionError as exc:
        raise click.ClickException(str(exc))
    click.echo(serialize_report(report).decode("utf-8"))
    if report.intake.dropped_labels or report.intake.dropped_low_confidence:
        click.echo(
            f"dropped: {len(report.intake.dropped_labels)} out-of-vocabulary label(s), "
            f"{report.intake.dropped_low_confidence} low-confidence finding(s)",
            err=True,
        )


@cli.command()
@click.option("--report", "report_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="DetectionReport JSON file.")
@click.option("--store", "store_path", default=DEFAULT_STORE, show_default=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]),
              default="json", show_default=True)
def diagnose(report_path, store_path, fmt):
    """Produce a fused recommendation report for a detection report."""
    from .service import DiagnosisService

    try:
        config = config_from_env(store_path=store_path)
        service = DiagnosisService(config)
        recommendation = service.diagnose_raw(report_path.read_bytes())
    except (DetectionError, RagError, EmbeddingError, StoreError) as exc:
        raise click.ClickException(str(exc))
    click.echo(render_report(recommendation, fmt).decode("utf-8"))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--store", "store_path", default=DEFAULT_STORE, show_default=True,
              type=click.Path(path_type=Path))
@click.option("--retrieval-k", type=int, default=None)
@click.option("--grounding-tau", type=float, default=None)
def serve(host, port, store_path, retrieval_k, grounding_tau):
    """Run the HTTP API (endpoints: /healthz, /ingest, /diagnose, /sessions)."""
    from .service import serve as run_service

    try:
        config = config_from_env(
            store_path=store_path,
            listen_host=host,
            listen_port=port,
            retrieval_k=retrieval_k,
            grounding_tau=grounding_tau,
        )
        run_service(config)
    except (StoreError, ValueError) as exc:
        raise click.ClickException(str(exc))


@cli.command()
@click.option("--url", default="http://127.0.0.1:8080", show_default=True,
              help="Base URL of a running leafrx service.")
@click.option("--api-key", envvar="LEAFRX_API_KEY", default=None)
def chat(url, api_key):
    """Interactive diagnostic dialogue against a running service."""
    headers = {"x-api-key": api_key} if api_key else {}
    base = url.rstrip("/")
    try:
        resp = requests.post(f"{base}/sessions", headers=headers, timeout=10)
        resp.raise_for_status()
        session_id = resp.json()["session_id"]
    except requests.RequestException as exc:
        raise click.ClickException(f"cannot reach service at {url}: {exc}")

    click.echo(f"session {session_id} started; empty line or Ctrl-D exits")
    while True:
        try:
            question = click.prompt("you", prompt_suffix="> ", default="",
                                    show_default=False)
        except (click.Abort, EOFError):
            break
        if not question.strip():
            break
        try:
            resp = requests.post(
                f"{base}/sessions/{session_id}/ask",
                json={"question": question},
                headers=headers,
                timeout=120,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise click.ClickException(f"ask failed: {exc}")
        payload = resp.json()
        answer = payload["answer"]
        badge = "" if answer["grounded"] else "  [UNGROUNDED]"
        click.echo(f"leafrx> {answer['text']}{badge}")
        if answer["citations"]:
            click.echo("        cites: " + ", ".join(answer["citations"]))
    click.echo("bye")


main = cli

if __name__ == "__main__":
    main()
