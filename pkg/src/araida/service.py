"""HTTP facade over annotation sessions for a live human annotator.

Pull-based: the UI polls GET /sessions/{id}/next for the pending suggestion
(idempotent until feedback arrives), posts the human's decision, and reads
metrics. Sessions live in memory; persistence is the checkpoint endpoint.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import experiments
from .annotators import ExternalAnnotationModel, ExternalModelConfig, LinearSoftmaxModel
from .corpus import Corpus
from .session import SessionConfig, SessionState, save_checkpoint


class CreateSessionRequest(BaseModel):
    corpus: str
    config: dict = {}
    model: dict = {}


class FeedbackRequest(BaseModel):
    example_id: str
    label: str


class LiveSession:
    """One annotator's session plus its traversal cursor and pending suggestion."""

    def __init__(self, session_id: str, state: SessionState, corpus: Corpus,
                 corpus_name: str):
        self.id = session_id
        self.state = state
        self.corpus = corpus
        self.corpus_name = corpus_name
        self.lock = threading.Lock()
        self.pending = None          # (Suggestion, Example)
        self.features = corpus.feature_matrix()
        self.remaining = list(range(len(corpus)))
        if state.config.ordering == "random":
            rng = np.random.default_rng(
                np.random.SeedSequence([state.config.seed, 7919]))
            self.remaining = [int(i) for i in rng.permutation(len(corpus))]
        self.queue: list[int] = []
        self.entry_texts: dict[int, str | None] = {}

    def _next_index(self) -> int | None:
        if not self.queue:
            if not self.remaining:
                return None
            take = min(self.state.config.batch_size, len(self.remaining))
            if self.state.config.ordering == "active":
                self.queue = experiments.select_batch(
                    self.remaining, self.features, self.state.model, take)
            else:
                self.queue = self.remaining[:take]
            picked = set(self.queue)
            self.remaining = [i for i in self.remaining if i not in picked]
        return self.queue[0]


def _suggestion_payload(live: LiveSession) -> dict:
    suggestion, example = live.pending
    classes = live.state.label_space.classes
    payload = {
        "example_id": example.id,
        "text": example.text,
        "suggested_class": classes[suggestion.suggested_class],
        "lambda": suggestion.lam,
        "f_probs": suggestion.f_pred.probs.tolist()
        if suggestion.f_pred.probs is not None else None,
        "g_probs": suggestion.g_pred.tolist() if suggestion.g_pred is not None else None,
        "neighbors": [],
    }
    if suggestion.neighbors is not None:
        for seq, label, dist in zip(suggestion.neighbors.seqs,
                                    suggestion.neighbors.labels,
                                    suggestion.neighbors.distances):
            payload["neighbors"].append({
                "text": live.entry_texts.get(int(seq)),
                "label": classes[int(label)],
                "distance": float(dist),
            })
    return payload


def _metrics_payload(live: LiveSession) -> dict:
    state = live.state
    return {
        "total": state.total,
        "correct": state.correct,
        "mca": state.mca() if state.total else None,
        "lambda_histogram": state.lambda_histogram(),
        "datastore_size": state.store.size,
    }


def create_app(corpora: dict[str, Corpus], checkpoint_dir=None) -> FastAPI:
    """Build the service around a set of preloaded named corpora."""
    app = FastAPI(title="araida annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, LiveSession] = {}
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else Path("checkpoints")

    def get_live(session_id: str) -> LiveSession:
        live = sessions.get(session_id)
        if live is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return live

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        corpus = corpora.get(req.corpus)
        if corpus is None:
            raise HTTPException(status_code=404, detail=f"unknown corpus {req.corpus!r}")
        if corpus.label_space is None:
            raise HTTPException(status_code=400, detail="corpus has no label space")
        try:
            config = SessionConfig(**req.config)
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid config: {exc}")
        model_spec = req.model or {"kind": "linear"}
        kind = model_spec.get("kind", "linear")
        if kind == "linear":
            model = LinearSoftmaxModel(corpus.label_space.num_classes, corpus.dim,
                                       lr=config.lr_f)
        elif kind == "external":
            model = ExternalAnnotationModel(
                ExternalModelConfig(
                    endpoint=model_spec["endpoint"],
                    timeout=model_spec.get("timeout", 10.0),
                    retries=model_spec.get("retries", 2),
                ),
                corpus.label_space.classes,
            )
        else:
            raise HTTPException(status_code=400, detail=f"unknown model kind {kind!r}")
        try:
            state = SessionState(model, corpus.label_space, corpus.dim, config)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session_id = uuid.uuid4().hex
        sessions[session_id] = LiveSession(session_id, state, corpus, req.corpus)
        return {"id": session_id, "classes": list(corpus.label_space.classes)}

    @app.get("/sessions/{session_id}/next")
    def next_suggestion(session_id: str):
        live = get_live(session_id)
        with live.lock:
            if live.pending is None:
                index = live._next_index()
                if index is None:
                    return Response(status_code=204)
                example = live.corpus.examples[index]
                suggestion = live.state.suggest(example)
                live.pending = (suggestion, example)
            return _suggestion_payload(live)

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, req: FeedbackRequest):
        live = get_live(session_id)
        with live.lock:
            if live.pending is None or live.pending[1].id != req.example_id:
                raise HTTPException(status_code=409,
                                    detail=f"{req.example_id!r} is not the pending example")
            try:
                label_idx = live.state.label_space.index(req.label)
            except KeyError:
                raise HTTPException(status_code=400, detail=f"unknown label {req.label!r}")
            suggestion, example = live.pending
            seq = live.state.store.next_seq
            live.state.feedback(suggestion, label_idx)
            live.entry_texts[seq] = example.text
            live.pending = None
            live.queue.pop(0)
            return {
                "total": live.state.total,
                "correct": live.state.correct,
                "mca": live.state.mca(),
            }

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        live = get_live(session_id)
        with live.lock:
            return _metrics_payload(live)

    @app.post("/sessions/{session_id}/checkpoint")
    def checkpoint(session_id: str):
        live = get_live(session_id)
        with live.lock:
            checkpoint_dir.mkdir(parents=True, exist_ok=True)
            path = checkpoint_dir / f"{session_id}.json"
            save_checkpoint(live.state, path, corpus_ref=live.corpus_name)
            return {"path": str(path)}

    return app
