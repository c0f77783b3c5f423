"""The classical student behind /v1/train and /v1/detect."""

import numpy as np
import pytest
from PIL import Image

from modelshim.errors import ShimError
from modelshim.student import ModelRegistry, StudentModel, detect, fit


def _scene(path, blobs, size=96):
    """Dark ellipses on a light background; returns their tight boxes."""
    image = np.full((size, size, 3), (236, 228, 238), dtype=np.uint8)
    ys, xs = np.mgrid[0:size, 0:size]
    boxes = []
    for cx, cy, a, b in blobs:
        mask = ((xs + 0.5 - cx) / a) ** 2 + ((ys + 0.5 - cy) / b) ** 2 <= 1.0
        image[mask] = (96, 58, 140)
        ys_on, xs_on = np.nonzero(mask)
        boxes.append(
            [float(xs_on.min()), float(ys_on.min()),
             float(xs_on.max() - xs_on.min() + 1), float(ys_on.max() - ys_on.min() + 1)]
        )
    Image.fromarray(image).save(path)
    return image, boxes


def _coco(entries):
    images = [
        {"id": i, "file_name": name, "width": 96, "height": 96}
        for i, (name, _) in enumerate(entries)
    ]
    annotations = []
    next_id = 1
    for i, (_, boxes) in enumerate(entries):
        for box in boxes:
            annotations.append(
                {"id": next_id, "image_id": i, "category_id": 1,
                 "bbox": box, "area": box[2] * box[3], "iscrowd": 0}
            )
            next_id += 1
    return {"images": images, "annotations": annotations,
            "categories": [{"id": 1, "name": "nuclei"}]}


class TestFitDetect:
    def test_fit_recovers_labeled_blobs(self, tmp_path):
        entries = []
        rng = np.random.default_rng(0)
        for i in range(3):
            blobs = [
                (20 + 30 * k + rng.uniform(-3, 3), 25 + 25 * j + rng.uniform(-3, 3), 6, 5)
                for k in range(3) for j in range(2)
            ]
            name = f"img_{i}.png"
            _, boxes = _scene(tmp_path / name, blobs)
            entries.append((name, boxes))
        doc = _coco(entries)
        model = fit(doc, str(tmp_path))
        image, boxes = _scene(tmp_path / "holdout.png", [(30, 30, 6, 5), (60, 60, 5, 6)])
        dets = detect(model, image)
        assert len(dets) == 2
        got = sorted(d["bbox"] for d in dets)
        assert got == sorted(boxes)

    def test_detect_blank(self):
        blank = np.full((32, 32, 3), 230, dtype=np.uint8)
        assert detect(StudentModel(160, 8, 2000), blank) == []

    def test_fit_rejects_empty_annotations(self, tmp_path):
        doc = {"images": [], "annotations": [], "categories": []}
        with pytest.raises(ShimError):
            fit(doc, str(tmp_path))

    def test_fit_rejects_missing_image(self, tmp_path):
        doc = _coco([("missing.png", [[1, 1, 4, 4]])])
        with pytest.raises(ShimError) as exc:
            fit(doc, str(tmp_path))
        assert exc.value.code == "missing-image"


class TestRegistry:
    def test_deterministic_ids_and_lookup(self):
        registry = ModelRegistry()
        model = StudentModel(160, 8, 2000)
        doc = {"images": [], "annotations": [{"id": 1}], "categories": []}
        a = registry.register(model, doc)
        b = registry.register(model, doc)
        assert a == b
        assert registry.get(a) == model

    def test_unknown_model(self):
        with pytest.raises(ShimError) as exc:
            ModelRegistry().get("student-ffffffffffff")
        assert exc.value.status == 404
