"""Low-latency HTTP service for app-card prediction, autocomplete, and feedback.

Model state is immutable after load; the feedback log is the only mutable
resource and is serialized through a single locked append writer that
fsyncs before acknowledging. Checkpoint hashes are verified at startup.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from . import checkpoints
from .catalog import Catalog
from .classifier import ClassifierState, load_bundle, predict_products
from .tokenizer import Vocab


@dataclass
class ServeConfig:
    catalog_path: str
    vocab_path: str
    encoder_path: str
    classifier_path: str
    feedback_log: str
    host: str = "127.0.0.1"
    port: int = 8321
    tau: float = 0.5
    tau_autocomplete: float | None = None  # defaults to tau
    top_k: int = 3
    min_prefix_len: int = 2
    cors_origins: tuple[str, ...] = ("*",)

    @classmethod
    def from_file(cls, path: str | Path) -> "ServeConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        doc["host"] = os.environ.get("APPINTENT_HOST", doc.get("host", "127.0.0.1"))
        if "APPINTENT_PORT" in os.environ:
            doc["port"] = int(os.environ["APPINTENT_PORT"])
        if "cors_origins" in doc:
            doc["cors_origins"] = tuple(doc["cors_origins"])
        return cls(**doc)


class FeedbackWriter:
    """Append-only JSONL writer; one line per event, durable before return."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        line = json.dumps(event) + "\n"
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())


def load_model(config: ServeConfig) -> tuple[Catalog, Vocab, ClassifierState, dict]:
    catalog, vocab, clf = load_bundle(
        config.catalog_path, config.vocab_path, config.encoder_path, config.classifier_path
    )
    hashes = {
        "catalog": checkpoints.file_sha256(config.catalog_path),
        "vocab": checkpoints.file_sha256(config.vocab_path),
        "encoder": checkpoints.file_sha256(config.encoder_path),
        "classifier": checkpoints.file_sha256(config.classifier_path),
    }
    return catalog, vocab, clf, hashes


def create_app(config: ServeConfig) -> FastAPI:
    catalog, vocab, clf, hashes = load_model(config)
    tau_ac = config.tau_autocomplete if config.tau_autocomplete is not None else config.tau
    feedback = FeedbackWriter(config.feedback_log)
    display = {p.id: p.display_name for p in catalog.products}

    app = FastAPI(title="appintent")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def respond(query: str, tau: float) -> dict:
        t0 = time.perf_counter_ns()
        ranked = predict_products(clf, query, vocab, catalog, tau=tau, top_k=config.top_k)
        cards = [
            {"product_id": pid, "display_name": display[pid], "score": score}
            for pid, score in ranked
        ]
        return {
            "query": query,
            "cards": cards,
            "triggered": bool(cards),
            "latency_micros": (time.perf_counter_ns() - t0) // 1000,
        }

    @app.get("/v1/predict")
    def predict(q: str = ""):
        if not q.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        return respond(q, config.tau)

    @app.get("/v1/autocomplete")
    def autocomplete(q: str = ""):
        if not q.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        if len(q.strip()) < config.min_prefix_len:
            return {"query": q, "cards": [], "triggered": False, "latency_micros": 0}
        return respond(q, tau_ac)

    @app.post("/v1/feedback", status_code=204)
    def post_feedback(event: dict):
        query = event.get("query", "")
        product_id = event.get("product_id", "")
        surface = event.get("surface", "search")
        if not query or product_id not in catalog:
            raise HTTPException(status_code=400, detail="invalid feedback event")
        if surface not in ("search", "autocomplete"):
            raise HTTPException(status_code=400, detail="invalid surface")
        feedback.append(
            {
                "query": query,
                "document_id": f"feedback:{product_id}",
                "product_id": product_id,
                "count": 1,
                "surface": surface,
                "timestamp": event.get("timestamp", time.time()),
            }
        )
        return None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "hashes": hashes, "catalog_size": catalog.size}

    return app


def serve(config: ServeConfig) -> None:
    """Blocking entry point: load checkpoints, bind, serve until shutdown."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
