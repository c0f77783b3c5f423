"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from nucleidet.data import Annotation, AnnotationSet, Category, ImageRecord
from nucleidet.geometry import BBox


def random_annotation_set(rng: np.random.Generator, max_images=5, max_boxes=12, with_scores=None) -> AnnotationSet:
    """Random but always-valid set: boxes inside their images."""
    n_images = int(rng.integers(1, max_images + 1))
    images = []
    annotations = {}
    for i in range(n_images):
        w = int(rng.integers(40, 200))
        h = int(rng.integers(40, 200))
        images.append(ImageRecord(id=i, file_name=f"img_{i:04d}.png", width=w, height=h))
        anns = []
        for _ in range(int(rng.integers(0, max_boxes + 1))):
            bw = float(rng.uniform(1, w / 2))
            bh = float(rng.uniform(1, h / 2))
            bx = float(rng.uniform(0, w - bw))
            by = float(rng.uniform(0, h - bh))
            scored = bool(rng.random() < 0.5) if with_scores is None else with_scores
            anns.append(
                Annotation(
                    BBox(bx, by, bw, bh),
                    category_id=1,
                    score=float(rng.uniform(0, 1)) if scored else None,
                )
            )
        if anns:
            annotations[i] = anns
    return AnnotationSet(
        images=images, annotations=annotations, categories=[Category(1, "nuclei")]
    )


def random_predictions_for(gt: AnnotationSet, rng: np.random.Generator) -> AnnotationSet:
    """Scored predictions inside gt's images: jittered GT copies plus noise.

    Jitter magnitudes straddle the IoU 0.5 boundary so matching decisions
    get exercised, not just trivially hit or missed.
    """
    annotations = {}
    for rec in gt.images:
        anns = []
        for a in gt.anns_for(rec.id):
            if rng.random() < 0.75:
                jx = float(rng.uniform(-a.box.w / 2, a.box.w / 2))
                jy = float(rng.uniform(-a.box.h / 2, a.box.h / 2))
                x = min(max(a.box.x + jx, 0.0), rec.width - a.box.w)
                y = min(max(a.box.y + jy, 0.0), rec.height - a.box.h)
                anns.append(Annotation(BBox(x, y, a.box.w, a.box.h), 1, float(rng.uniform(0, 1))))
        for _ in range(int(rng.integers(0, 5))):
            bw = float(rng.uniform(1, rec.width / 2))
            bh = float(rng.uniform(1, rec.height / 2))
            bx = float(rng.uniform(0, rec.width - bw))
            by = float(rng.uniform(0, rec.height - bh))
            anns.append(Annotation(BBox(bx, by, bw, bh), 1, float(rng.uniform(0, 1))))
        if anns:
            annotations[rec.id] = anns
    return gt.bare().with_annotations(annotations)


def detections_as_plain(aset: AnnotationSet) -> dict[int, list[dict]]:
    """AnnotationSet -> oracle-friendly {image_id: [{bbox, score}]} mapping."""
    out = {}
    for image_id in aset.image_ids():
        out[image_id] = [
            {
                "bbox": a.box.as_xywh(),
                "score": 1.0 if a.score is None else a.score,
            }
            for a in aset.anns_for(image_id)
        ]
    return out


def gts_as_plain(aset: AnnotationSet) -> dict[int, list[list[float]]]:
    return {
        image_id: [a.box.as_xywh() for a in aset.anns_for(image_id)]
        for image_id in aset.image_ids()
    }
