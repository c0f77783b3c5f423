"""Self-contained trainable detector backing /v1/train and /v1/detect.

Neural student training is out of scope for this server; a classical blob
detector fit by grid search keeps the endpoints functional end to end.
Fitted models live in an in-memory registry for the server's lifetime and
are addressed by a content-derived id, so retraining on identical inputs
yields the same id.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ShimError

THRESHOLDS = (100, 130, 160, 190, 220)
MIN_AREAS = (8, 16, 32)
MAX_AREAS = (1600, 6400)


@dataclass(frozen=True)
class StudentModel:
    intensity_threshold: int
    min_area: int
    max_area: int


def _luma(image: np.ndarray) -> np.ndarray:
    rgb = image.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def detect(model: StudentModel, image: np.ndarray) -> list[dict]:
    """Threshold dark regions, gate by area, emit solidity-scored boxes."""
    mask = _luma(image) < model.intensity_threshold
    labels, n = ndimage.label(mask)
    out = []
    if n:
        areas = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
        for idx, sl in enumerate(ndimage.find_objects(labels)):
            area = float(areas[idx])
            if not model.min_area <= area <= model.max_area:
                continue
            y0, y1 = sl[0].start, sl[0].stop
            x0, x1 = sl[1].start, sl[1].stop
            w, h = x1 - x0, y1 - y0
            out.append(
                {
                    "bbox": [float(x0), float(y0), float(w), float(h)],
                    "score": min(area / (w * h), 1.0),
                    "phrase": "",
                }
            )
    out.sort(key=lambda d: (-d["score"], d["bbox"][0], d["bbox"][1]))
    return out


def _iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def _f1(dets: list[dict], gts: list[list[float]]) -> float:
    if not dets and not gts:
        return 0.0
    taken = [False] * len(gts)
    tp = 0
    for det in dets:
        best, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = _iou(det["bbox"], gt)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= 0.5:
            taken[best_j] = True
            tp += 1
    return 2.0 * tp / (len(dets) + len(gts))


def _load_training_set(annotations: dict, image_root: str):
    try:
        images = {int(e["id"]): str(e["file_name"]) for e in annotations["images"]}
        boxes: dict[int, list[list[float]]] = {}
        for entry in annotations["annotations"]:
            boxes.setdefault(int(entry["image_id"]), []).append(
                [float(v) for v in entry["bbox"]]
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ShimError(400, "bad-annotations", f"malformed COCO document: {exc}") from exc
    if not boxes:
        raise ShimError(400, "empty-annotations", "no boxes to train on")
    root = Path(image_root)
    pixels = {}
    for image_id, file_name in images.items():
        path = root / file_name
        if not path.is_file():
            raise ShimError(400, "missing-image", f"training image not found: {path}")
        with Image.open(path) as img:
            pixels[image_id] = np.asarray(img.convert("RGB"))
    return pixels, boxes


def fit(annotations: dict, image_root: str) -> StudentModel:
    """Grid-search the detector parameters against the provided labels."""
    pixels, boxes = _load_training_set(annotations, image_root)
    image_ids = sorted(boxes)
    best_model, best_f1 = None, -1.0
    for thr in THRESHOLDS:
        for mn in MIN_AREAS:
            for mx in MAX_AREAS:
                model = StudentModel(thr, mn, mx)
                tp_f1 = np.mean(
                    [_f1(detect(model, pixels[i]), boxes[i]) for i in image_ids]
                )
                if tp_f1 > best_f1:
                    best_f1, best_model = float(tp_f1), model
    return best_model


class ModelRegistry:
    """In-memory model store; ids are content hashes of params + data."""

    def __init__(self):
        self._models: dict[str, StudentModel] = {}

    def register(self, model: StudentModel, annotations: dict) -> str:
        digest = hashlib.sha256(
            json.dumps([asdict(model), annotations], sort_keys=True).encode()
        ).hexdigest()[:12]
        model_id = f"student-{digest}"
        self._models[model_id] = model
        return model_id

    def get(self, model_id: str) -> StudentModel:
        model = self._models.get(model_id)
        if model is None:
            raise ShimError(404, "unknown-model", f"no model {model_id!r}")
        return model
