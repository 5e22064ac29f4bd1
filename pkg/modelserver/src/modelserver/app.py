"""FastAPI application: /extract, /nli, /health.

Request handling may be concurrent; calls into each model are
serialized with a per-model lock since the backends are not promised to
be thread-safe.  Malformed request bodies answer 400, over-length text
413, and a missing model 503.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .backends import LoadedModels, build_backends
from .config import ServerConfig
from .coref import resolve_pronouns


class ExtractRequest(BaseModel):
    text: str


class NliRequest(BaseModel):
    premise: str
    hypothesis: str


def create_app(cfg: ServerConfig | None = None, models: LoadedModels | None = None) -> FastAPI:
    """Build the service; backends load once at construction time."""
    cfg = cfg or ServerConfig()
    models = models or build_backends(cfg)
    app = FastAPI(title="modelserver", version=__version__)
    extract_lock = threading.Lock()
    nli_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        # The contract promises 400 for malformed bodies, not the
        # framework's default 422.
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    @app.post("/extract")
    def extract(req: ExtractRequest) -> dict:
        if len(req.text) > cfg.max_text_chars:
            raise HTTPException(
                status_code=413,
                detail=f"text has {len(req.text)} characters, limit is {cfg.max_text_chars}",
            )
        if models.extractor is None:
            raise HTTPException(status_code=503, detail="extraction model not loaded")
        text = resolve_pronouns(req.text) if cfg.coref_enabled else req.text
        with extract_lock:
            triples = models.extractor.extract(text)
        return {
            "triples": [
                {"head": head, "relation": relation, "tail": tail}
                for head, relation, tail in triples
            ]
        }

    @app.post("/nli")
    def nli(req: NliRequest) -> dict:
        if not req.premise.strip() or not req.hypothesis.strip():
            raise HTTPException(
                status_code=400, detail="premise and hypothesis must be non-empty"
            )
        if models.nli is None:
            raise HTTPException(status_code=503, detail="NLI model not loaded")
        with nli_lock:
            label, scores = models.nli.classify(req.premise, req.hypothesis)
        return {"label": label, "scores": scores}

    @app.get("/health")
    def health() -> dict:
        def slot(backend) -> dict:
            return {
                "loaded": backend is not None,
                "backend": getattr(backend, "name", None),
                "model_id": getattr(backend, "model_id", None),
            }

        loaded = models.extractor is not None and models.nli is not None
        return {
            "status": "ok" if loaded else "degraded",
            "extractor": slot(models.extractor),
            "nli": slot(models.nli),
            "coref_enabled": cfg.coref_enabled,
            "notes": models.notes,
        }

    return app
