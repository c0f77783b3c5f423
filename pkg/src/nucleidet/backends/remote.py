"""HTTP client for remote model backends speaking the wire protocol.

Transient failures (connection errors, timeouts, HTTP 5xx, and the
"overloaded" error code) are retried with exponential backoff; anything
malformed or otherwise rejected fails fast as a protocol error. A
semaphore caps the number of in-flight requests across threads.
"""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import requests

from ..data import AnnotationSet, annotation_set_to_coco
from ..errors import ConfigurationError, ProtocolError, TransportError
from ..geometry import BBox, Detection
from . import wire
from .base import GroundingQuery

log = logging.getLogger(__name__)

DEFAULT_RETRY_BACKOFF = (0.1, 0.2)  # sleeps between the 3 attempts


class WireClient:
    """Thin protocol client; one instance may be shared across threads."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retry_backoff: tuple[float, ...] = DEFAULT_RETRY_BACKOFF,
        max_in_flight: int = 8,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retry_backoff = tuple(retry_backoff)
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(max_in_flight)

    def _post(self, kind: str, payload: dict) -> dict:
        url = self.base_url + wire.ENDPOINTS[kind]
        attempts = len(self.retry_backoff) + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.retry_backoff[attempt - 1])
            try:
                with self._gate:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = TransportError(f"{kind}: {exc}")
                log.warning("transport failure on %s (attempt %d): %s", kind, attempt + 1, exc)
                continue
            if resp.status_code == 200:
                try:
                    body = resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"{kind}: response is not JSON") from exc
                wire.validate_response(kind, body)
                return body
            retriable, error = self._classify_error(kind, resp)
            if not retriable:
                raise error
            last_error = error
            log.warning("retriable failure on %s (attempt %d): %s", kind, attempt + 1, error)
        raise last_error if last_error else TransportError(f"{kind}: exhausted retries")

    @staticmethod
    def _classify_error(kind: str, resp) -> tuple[bool, Exception]:
        code = None
        message = resp.text[:200]
        try:
            body = resp.json()
            wire.validate_error_body(body)
            code = body["error"]["code"]
            message = body["error"]["message"]
        except (ValueError, ProtocolError):
            pass
        if code == wire.RETRIABLE_ERROR_CODE or resp.status_code >= 500:
            return True, TransportError(f"{kind}: HTTP {resp.status_code} {code or ''}: {message}")
        return False, ProtocolError(f"{kind}: HTTP {resp.status_code} {code or ''}: {message}")

    # -- capability calls ---------------------------------------------------

    def health(self) -> bool:
        try:
            resp = self._session.get(self.base_url + wire.HEALTH_ENDPOINT, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"health: {exc}") from exc
        return resp.status_code == 200 and resp.json().get("status") == "ok"

    def ground(self, image_field: str, query: str, score_threshold: float, max_results: int) -> list[Detection]:
        body = self._post(
            "ground",
            {
                "image": image_field,
                "query": query,
                "score_threshold": score_threshold,
                "max_results": max_results,
            },
        )
        return _parse_detections(body["detections"])

    def caption(self, image_field: str) -> str:
        return self._post("caption", {"image": image_field})["text"]

    def synonyms(self, word: str, k: int) -> list[str]:
        return list(self._post("synonyms", {"word": word, "k": k})["words"])

    def train(self, annotations: AnnotationSet, image_root: str) -> str:
        body = self._post(
            "train",
            {"annotations": annotation_set_to_coco(annotations), "image_root": image_root},
        )
        return body["model_id"]

    def detect(self, model_id: str, image_field: str) -> list[Detection]:
        body = self._post("detect", {"model_id": model_id, "image": image_field})
        return _parse_detections(body["detections"])


def _parse_detections(entries) -> list[Detection]:
    dets = []
    for entry in entries:
        x, y, w, h = entry["bbox"]
        try:
            dets.append(Detection(BBox(x, y, w, h), float(entry["score"]), entry["phrase"]))
        except ValueError as exc:
            raise ProtocolError(f"backend returned invalid detection: {exc}") from exc
    return dets


def _image_field(image: np.ndarray | None, path: str | None) -> str:
    if image is not None:
        return wire.encode_image(image)
    if path:
        return path
    raise ConfigurationError("remote backends need pixel data or an image path")


class RemoteGrounder:
    def __init__(self, client: WireClient):
        self._client = client

    def ground(self, query: GroundingQuery) -> list[Detection]:
        return self._client.ground(
            _image_field(query.image, query.image_path),
            query.query,
            query.score_threshold,
            query.max_results,
        )


class RemoteCaptioner:
    def __init__(self, client: WireClient):
        self._client = client

    def caption(self, crop: np.ndarray) -> str:
        return self._client.caption(wire.encode_image(crop))


class RemoteSynonyms:
    def __init__(self, client: WireClient):
        self._client = client

    def synonyms(self, word: str, k: int) -> list[str]:
        return self._client.synonyms(word, k)


class RemoteStudent:
    """Student capability over /v1/train and /v1/detect.

    Training happens server-side from the COCO document plus an image root
    the server can see; the returned model id is the handle for detection.
    """

    def __init__(self, client: WireClient, image_root: str | Path):
        self._client = client
        self._image_root = str(image_root)

    def fit(self, pseudo: AnnotationSet, images: Mapping[int, np.ndarray]) -> Any:
        return self._client.train(pseudo, self._image_root)

    def detect(self, model: Any, image: np.ndarray) -> list[Detection]:
        return self._client.detect(model, wire.encode_image(image))
