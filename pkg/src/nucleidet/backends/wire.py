"""Wire protocol for remote model backends: schemas, codecs, conformance.

All endpoints are JSON-over-HTTP POSTs (health is a GET). Image fields
carry either a base64-encoded PNG or a server-visible file path; servers
distinguish the two by attempting base64+PNG decoding first.

Error responses use HTTP 4xx/5xx with body {"error": {"code", "message"}};
the code "overloaded" marks a retriable condition.
"""

from __future__ import annotations

import base64
import binascii
import io
from dataclasses import dataclass

import jsonschema
import numpy as np
from PIL import Image

from ..errors import ProtocolError

_BBOX_SCHEMA = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 4,
    "maxItems": 4,
}

_DETECTION_SCHEMA = {
    "type": "object",
    "required": ["bbox", "score", "phrase"],
    "properties": {
        "bbox": _BBOX_SCHEMA,
        "score": {"type": "number", "minimum": 0, "maximum": 1},
        "phrase": {"type": "string"},
    },
}

_DETECTIONS_RESPONSE = {
    "type": "object",
    "required": ["detections"],
    "properties": {"detections": {"type": "array", "items": _DETECTION_SCHEMA}},
}

REQUEST_SCHEMAS: dict[str, dict] = {
    "ground": {
        "type": "object",
        "required": ["image", "query", "score_threshold", "max_results"],
        "properties": {
            "image": {"type": "string"},
            "query": {"type": "string", "minLength": 1},
            "score_threshold": {"type": "number", "minimum": 0, "maximum": 1},
            "max_results": {"type": "integer", "minimum": 1},
        },
    },
    "caption": {
        "type": "object",
        "required": ["image"],
        "properties": {"image": {"type": "string"}},
    },
    "synonyms": {
        "type": "object",
        "required": ["word", "k"],
        "properties": {
            "word": {"type": "string", "minLength": 1},
            "k": {"type": "integer", "minimum": 0},
        },
    },
    "train": {
        "type": "object",
        "required": ["annotations", "image_root"],
        "properties": {
            "annotations": {"type": "object"},
            "image_root": {"type": "string"},
        },
    },
    "detect": {
        "type": "object",
        "required": ["model_id", "image"],
        "properties": {
            "model_id": {"type": "string", "minLength": 1},
            "image": {"type": "string"},
        },
    },
}

RESPONSE_SCHEMAS: dict[str, dict] = {
    "ground": _DETECTIONS_RESPONSE,
    "caption": {
        "type": "object",
        "required": ["text"],
        "properties": {"text": {"type": "string", "minLength": 1}},
    },
    "synonyms": {
        "type": "object",
        "required": ["words"],
        "properties": {"words": {"type": "array", "items": {"type": "string"}}},
    },
    "train": {
        "type": "object",
        "required": ["model_id"],
        "properties": {"model_id": {"type": "string", "minLength": 1}},
    },
    "detect": _DETECTIONS_RESPONSE,
    "health": {
        "type": "object",
        "required": ["status"],
        "properties": {"status": {"type": "string"}},
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error"],
    "properties": {
        "error": {
            "type": "object",
            "required": ["code", "message"],
            "properties": {
                "code": {"type": "string"},
                "message": {"type": "string"},
            },
        }
    },
}

RETRIABLE_ERROR_CODE = "overloaded"

ENDPOINTS = {
    "ground": "/v1/ground",
    "caption": "/v1/caption",
    "synonyms": "/v1/synonyms",
    "train": "/v1/train",
    "detect": "/v1/detect",
}
HEALTH_ENDPOINT = "/v1/health"


def validate_request(kind: str, payload) -> None:
    try:
        jsonschema.validate(payload, REQUEST_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"invalid {kind} request: {exc.message}") from exc


def validate_response(kind: str, payload) -> None:
    try:
        jsonschema.validate(payload, RESPONSE_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"invalid {kind} response: {exc.message}") from exc


def validate_error_body(payload) -> None:
    try:
        jsonschema.validate(payload, ERROR_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"invalid error body: {exc.message}") from exc


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def encode_image(image: np.ndarray) -> str:
    """Encode an HxWx3 uint8 array as a base64 PNG string."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image_field(value: str) -> np.ndarray:
    """Resolve an image field: base64 PNG first, then a filesystem path."""
    try:
        raw = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError):
        raw = b""
    if raw.startswith(_PNG_MAGIC):
        with Image.open(io.BytesIO(raw)) as img:
            return np.asarray(img.convert("RGB"))
    with Image.open(value) as img:
        return np.asarray(img.convert("RGB"))


# --------------------------------------------------------------------------
# Conformance suite
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


def _tiny_image_b64() -> str:
    image = np.full((16, 16, 3), 230, dtype=np.uint8)
    image[4:12, 4:12] = (90, 60, 140)
    return encode_image(image)


def _tiny_coco() -> dict:
    return {
        "images": [{"id": 0, "file_name": "img_0000.png", "width": 16, "height": 16}],
        "annotations": [
            {
                "id": 1,
                "image_id": 0,
                "category_id": 1,
                "bbox": [4.0, 4.0, 8.0, 8.0],
                "area": 64.0,
                "iscrowd": 0,
                "score": 0.9,
            }
        ],
        "categories": [{"id": 1, "name": "nuclei"}],
    }


def run_conformance(base_url: str, session=None, timeout: float = 10.0) -> list[ConformanceCheck]:
    """Drive every endpoint of a backend server and validate the schemas.

    Returns one check per probe; a fully conformant server passes all of
    them. Network or schema failures are captured as failed checks, not
    raised.
    """
    import requests

    http = session or requests.Session()
    base = base_url.rstrip("/")
    image = _tiny_image_b64()
    checks: list[ConformanceCheck] = []

    def run(name, fn):
        try:
            fn()
            checks.append(ConformanceCheck(name, True))
        except Exception as exc:  # noqa: BLE001 - report, don't abort the suite
            checks.append(ConformanceCheck(name, False, f"{type(exc).__name__}: {exc}"))

    def post(kind, payload):
        resp = http.post(base + ENDPOINTS[kind], json=payload, timeout=timeout)
        if resp.status_code != 200:
            raise ProtocolError(f"{kind}: HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        validate_response(kind, body)
        return body

    def check_health():
        resp = http.get(base + HEALTH_ENDPOINT, timeout=timeout)
        if resp.status_code != 200:
            raise ProtocolError(f"health: HTTP {resp.status_code}")
        body = resp.json()
        validate_response("health", body)
        if body["status"] != "ok":
            raise ProtocolError(f"health status {body['status']!r}")

    def check_ground():
        body = post(
            "ground",
            {"image": image, "query": "round purple nuclei",
             "score_threshold": 0.25, "max_results": 100},
        )
        for det in body["detections"]:
            x, y, w, h = det["bbox"]
            if w <= 0 or h <= 0:
                raise ProtocolError(f"degenerate bbox {det['bbox']}")

    def check_caption():
        post("caption", {"image": image})

    def check_synonyms():
        body = post("synonyms", {"word": "round", "k": 3})
        if len(body["words"]) > 3:
            raise ProtocolError("synonyms returned more than k words")
        if "round" in [w.lower() for w in body["words"]]:
            raise ProtocolError("synonyms echoed the input word")

    def check_train_detect():
        body = post("train", {"annotations": _tiny_coco(), "image_root": "."})
        post("detect", {"model_id": body["model_id"], "image": image})

    def check_error_body():
        resp = http.post(base + ENDPOINTS["ground"], json={"query": ""}, timeout=timeout)
        if resp.status_code < 400:
            raise ProtocolError(f"malformed request accepted: HTTP {resp.status_code}")
        validate_error_body(resp.json())

    run("health", check_health)
    run("ground", check_ground)
    run("caption", check_caption)
    run("synonyms", check_synonyms)
    run("train+detect", check_train_detect)
    run("error-body", check_error_body)
    return checks
