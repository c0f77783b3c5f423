"""Image field handling: base64 PNG or server-visible path."""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image

from .errors import ShimError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def decode_image_field(value: str) -> np.ndarray:
    """Resolve an image field to an HxWx3 uint8 array."""
    try:
        raw = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError):
        raw = b""
    try:
        if raw.startswith(_PNG_MAGIC):
            with Image.open(io.BytesIO(raw)) as img:
                return np.asarray(img.convert("RGB"))
        with Image.open(value) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise ShimError(400, "bad-image", f"cannot decode image field: {exc}") from exc
