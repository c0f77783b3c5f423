"""COCO detection-format annotation I/O.

Field layout written (and accepted) bit-exactly:
  images[{id, file_name, width, height}]
  annotations[{id, image_id, category_id, bbox: [x, y, w, h], area,
               iscrowd: 0, score?}]
  categories[{id, name}]

Saving assigns annotation ids sequentially (image order, then per-image
order), so serialization is a pure function of the data model: saving the
same set twice yields identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from ..errors import DataFormatError, DataValidationError
from ..geometry import BBox, EmptyClipError, clip
from .model import Annotation, AnnotationSet, Category, ImageRecord


def annotation_set_to_coco(aset: AnnotationSet) -> dict:
    """Render an AnnotationSet as a COCO-detection document (plain dict)."""
    images = [
        {"id": rec.id, "file_name": rec.file_name, "width": rec.width, "height": rec.height}
        for rec in aset.images
    ]
    annotations = []
    next_id = 1
    for rec in aset.images:
        for ann in aset.anns_for(rec.id):
            entry = {
                "id": next_id,
                "image_id": rec.id,
                "category_id": ann.category_id,
                "bbox": ann.box.as_xywh(),
                "area": ann.box.area,
                "iscrowd": 0,
            }
            if ann.score is not None:
                entry["score"] = ann.score
            annotations.append(entry)
            next_id += 1
    categories = [{"id": cat.id, "name": cat.name} for cat in aset.categories]
    return {"images": images, "annotations": annotations, "categories": categories}


def coco_to_annotation_set(doc: dict, *, clip_boxes: bool = True) -> AnnotationSet:
    """Build an AnnotationSet from a parsed COCO document.

    Boxes are clipped to their image (canonical form); a box entirely
    outside its image, or referencing an unknown image, is a validation
    error.
    """
    if not isinstance(doc, dict):
        raise DataFormatError("COCO document must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise DataFormatError(f"COCO document missing list field '{key}'")

    images = []
    for i, entry in enumerate(doc["images"]):
        try:
            images.append(
                ImageRecord(
                    id=int(entry["id"]),
                    file_name=str(entry["file_name"]),
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"images[{i}]: {exc}") from exc
    by_id = {rec.id: rec for rec in images}

    annotations: dict[int, list[Annotation]] = {}
    for i, entry in enumerate(doc["annotations"]):
        try:
            image_id = int(entry["image_id"])
            bbox = entry["bbox"]
            x, y, w, h = (float(v) for v in bbox)
            category_id = int(entry.get("category_id", 1))
            score = entry.get("score")
            score = None if score is None else float(score)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"annotations[{i}]: {exc}") from exc
        rec = by_id.get(image_id)
        if rec is None:
            raise DataValidationError(
                f"annotations[{i}] references unknown image id {image_id}"
            )
        try:
            box = BBox(x, y, w, h)
        except ValueError as exc:
            raise DataValidationError(f"annotations[{i}]: {exc}") from exc
        if clip_boxes:
            try:
                box = clip(box, rec.width, rec.height)
            except EmptyClipError as exc:
                raise DataValidationError(f"annotations[{i}]: {exc}") from exc
        annotations.setdefault(image_id, []).append(
            Annotation(box=box, category_id=category_id, score=score)
        )

    categories = []
    for i, entry in enumerate(doc["categories"]):
        try:
            categories.append(Category(id=int(entry["id"]), name=str(entry["name"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"categories[{i}]: {exc}") from exc

    return AnnotationSet(images=images, annotations=annotations, categories=categories)


def dumps_annotations(aset: AnnotationSet) -> str:
    return json.dumps(annotation_set_to_coco(aset), indent=2) + "\n"


def save_annotations(aset: AnnotationSet, path: str | Path) -> None:
    """Write COCO JSON atomically (write-temp-then-rename)."""
    path = Path(path)
    payload = dumps_annotations(aset)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_annotations(path: str | Path) -> AnnotationSet:
    """Load a COCO detection file; parse errors carry the file location."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        return coco_to_annotation_set(doc)
    except (DataFormatError, DataValidationError) as exc:
        raise type(exc)(f"{path}: {exc}") from exc
