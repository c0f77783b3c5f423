"""FastAPI app implementing the backend wire protocol.

Endpoints: POST /v1/ground | /v1/caption | /v1/synonyms | /v1/train |
/v1/detect, GET /v1/health. Every failure is reported as
{"error": {"code", "message"}}; "overloaded" (HTTP 503) marks the bounded
request queue rejecting work and is safe to retry.
"""

from __future__ import annotations

import logging
import threading
from contextlib import contextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import ShimError, overloaded

log = logging.getLogger(__name__)


class GroundRequest(BaseModel):
    image: str
    query: str = Field(min_length=1)
    score_threshold: float = Field(ge=0.0, le=1.0)
    max_results: int = Field(ge=1)


class CaptionRequest(BaseModel):
    image: str


class SynonymsRequest(BaseModel):
    word: str = Field(min_length=1)
    k: int = Field(ge=0)


class TrainRequest(BaseModel):
    annotations: dict
    image_root: str


class DetectRequest(BaseModel):
    model_id: str = Field(min_length=1)
    image: str


class _QueueGate:
    """Bounded admission: reject with "overloaded" instead of queueing forever."""

    def __init__(self, limit: int):
        self._slots = threading.BoundedSemaphore(limit)

    @contextmanager
    def admit(self):
        if not self._slots.acquire(blocking=False):
            raise overloaded()
        try:
            yield
        finally:
            self._slots.release()


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message}},
    )


def create_app(backends, queue_size: int = 16) -> FastAPI:
    """Wrap a backends object (stub or real) in the wire protocol."""
    app = FastAPI(title="modelshim", docs_url=None, redoc_url=None)
    gate = _QueueGate(queue_size)

    @app.exception_handler(ShimError)
    async def _shim_error(request: Request, exc: ShimError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error_response(400, "bad-request", str(exc.errors()[:3]))

    @app.exception_handler(Exception)
    async def _internal_error(request: Request, exc: Exception):
        log.exception("unhandled error")
        return _error_response(500, "internal", f"{type(exc).__name__}: {exc}")

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/ground")
    def ground(req: GroundRequest):
        with gate.admit():
            dets = backends.ground(req.image, req.query, req.score_threshold, req.max_results)
        return {"detections": dets}

    @app.post("/v1/caption")
    def caption(req: CaptionRequest):
        with gate.admit():
            text = backends.caption(req.image)
        return {"text": text}

    @app.post("/v1/synonyms")
    def synonyms(req: SynonymsRequest):
        with gate.admit():
            words = backends.synonyms(req.word, req.k)
        return {"words": words}

    @app.post("/v1/train")
    def train(req: TrainRequest):
        with gate.admit():
            model_id = backends.train(req.annotations, req.image_root)
        return {"model_id": model_id}

    @app.post("/v1/detect")
    def detect(req: DetectRequest):
        with gate.admit():
            dets = backends.detect(req.model_id, req.image)
        return {"detections": dets}

    return app
