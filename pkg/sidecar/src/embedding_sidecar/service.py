"""The HTTP wire contract.

GET /health
    200 {"status": "ok", "model_id": ..., "D": 3072} once the model is
    loaded; 503 {"status": "loading", ...} before that.

POST /embed  {"sentences": [str, ...], "model_id": str}
    200 {"vectors": [[float x 3072], ...], "truncated_flags": [bool, ...],
         "model_id": ..., "D": 3072} with one vector per input sentence.
    400 malformed body, 404 unknown model_id, 500 inference failure,
    503 while the model is still loading.

Request bodies are validated by hand so malformed input maps to 400 (not
the framework's default 422) and an unknown model_id maps cleanly to 404.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from threading import Lock
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import EMBEDDING_DIM, __version__
from .model import InferenceError, SentenceEmbedder

logger = logging.getLogger(__name__)


@dataclass
class ServiceState:
    """Shared service state; `embedder` stays None until loading finishes."""

    model_id: str = "default"
    embedder: Optional[SentenceEmbedder] = None
    load_error: Optional[str] = None
    lock: Lock = field(default_factory=Lock)

    def ready(self) -> bool:
        return self.embedder is not None


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="embedding-sidecar", version=__version__)
    app.state.service = state

    @app.get("/health")
    def health():
        if not state.ready():
            body = {"status": "loading", "model_id": state.model_id}
            if state.load_error:
                body = {"status": "error", "model_id": state.model_id,
                        "detail": state.load_error}
            return JSONResponse(body, status_code=503)
        return {"status": "ok", "model_id": state.model_id,
                "D": EMBEDDING_DIM}

    @app.post("/embed")
    async def embed(request: Request):
        try:
            payload = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return JSONResponse({"detail": "body is not valid JSON"},
                                status_code=400)
        problem = _validate(payload)
        if problem:
            return JSONResponse({"detail": problem}, status_code=400)
        requested = payload.get("model_id", state.model_id)
        if requested != state.model_id:
            return JSONResponse(
                {"detail": f"unknown model_id {requested!r}; "
                           f"this service serves {state.model_id!r}"},
                status_code=404)
        if not state.ready():
            return JSONResponse(
                {"detail": "model is still loading"}, status_code=503)
        sentences = payload["sentences"]
        try:
            with state.lock:  # serialize inference; protocol is stateless
                vectors, truncated = state.embedder.embed(sentences)
        except InferenceError as exc:
            logger.exception("inference failed")
            return JSONResponse({"detail": str(exc)}, status_code=500)
        return {"vectors": vectors, "truncated_flags": truncated,
                "model_id": state.model_id, "D": EMBEDDING_DIM}

    return app


def _validate(payload) -> Optional[str]:
    if not isinstance(payload, dict):
        return "body must be a JSON object"
    if "sentences" not in payload:
        return "missing required field 'sentences'"
    sentences = payload["sentences"]
    if not isinstance(sentences, list):
        return "'sentences' must be a list of strings"
    for index, sentence in enumerate(sentences):
        if not isinstance(sentence, str):
            return f"'sentences[{index}]' is not a string"
    if "model_id" in payload and not isinstance(payload["model_id"], str):
        return "'model_id' must be a string"
    return None
