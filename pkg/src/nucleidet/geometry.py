"""Axis-aligned box arithmetic: IoU, NMS, square-crop expansion, clipping.

Boxes follow the COCO convention: (x, y, w, h) with the origin at the top
left and continuous coordinates. All types are immutable values and every
operation is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EmptyClipError(ValueError):
    """Raised when clipping a box against an image leaves nothing."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, COCO (x, y, w, h) layout."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive extent, got {self}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def as_xywh(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Detection:
    """A scored box plus the prompt phrase that produced it (may be empty)."""

    box: BBox
    score: float
    phrase: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU of two box sequences as a |a| x |b| array."""
    boxes_a = list(boxes_a)
    boxes_b = list(boxes_b)
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    ax = np.array([b.x for b in boxes_a])[:, None]
    ay = np.array([b.y for b in boxes_a])[:, None]
    aw = np.array([b.w for b in boxes_a])[:, None]
    ah = np.array([b.h for b in boxes_a])[:, None]
    bx = np.array([b.x for b in boxes_b])[None, :]
    by = np.array([b.y for b in boxes_b])[None, :]
    bw = np.array([b.w for b in boxes_b])[None, :]
    bh = np.array([b.h for b in boxes_b])[None, :]
    iw = np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx)
    ih = np.minimum(ay + ah, by + bh) - np.maximum(ay, by)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    return inter / (aw * ah + bw * bh - inter)


def _detection_sort_key(d: Detection):
    return (-d.score, d.box.x, d.box.y, d.box.w, d.box.h)


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited by descending score (ties broken by ascending
    x, then y) and kept iff their IoU with every previously kept detection
    is strictly below the threshold. The kept order is the visiting order,
    so the result stays sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    if not dets:
        return []
    order = sorted(dets, key=_detection_sort_key)
    xs = np.array([d.box.x for d in order])
    ys = np.array([d.box.y for d in order])
    x2s = np.array([d.box.x2 for d in order])
    y2s = np.array([d.box.y2 for d in order])
    areas = np.array([d.box.w for d in order]) * np.array([d.box.h for d in order])

    kept_idx: list[int] = []
    for i in range(len(order)):
        if kept_idx:
            k = np.array(kept_idx)
            iw = np.minimum(x2s[i], x2s[k]) - np.maximum(xs[i], xs[k])
            ih = np.minimum(y2s[i], y2s[k]) - np.maximum(ys[i], ys[k])
            inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
            union = areas[i] + areas[k] - inter
            if np.any(inter / union >= iou_threshold):
                continue
        kept_idx.append(i)
    return [order[i] for i in kept_idx]


def square_expand(box: BBox, image_w: float, image_h: float) -> BBox:
    """Smallest square containing the box, translated to fit the image.

    The side is max(w, h), centered on the box center. At image borders the
    square is translated, never shrunk, so crops keep a consistent scale;
    only when the side exceeds the smaller image dimension does it clamp to
    that minimum.
    """
    side = max(box.w, box.h)
    side = min(side, min(image_w, image_h))
    cx, cy = box.center
    left = min(max(cx - side / 2.0, 0.0), image_w - side)
    top = min(max(cy - side / 2.0, 0.0), image_h - side)
    return BBox(left, top, side, side)


def clip(box: BBox, image_w: float, image_h: float) -> BBox:
    """Intersect a box with the image rectangle.

    Raises EmptyClipError when the box does not intersect the image.
    """
    if box.x >= 0 and box.y >= 0 and box.x2 <= image_w and box.y2 <= image_h:
        return box
    x1 = max(box.x, 0.0)
    y1 = max(box.y, 0.0)
    x2 = min(box.x2, float(image_w))
    y2 = min(box.y2, float(image_h))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise EmptyClipError(
            f"box {box.as_xywh()} lies outside a {image_w}x{image_h} image"
        )
    return BBox(x1, y1, x2 - x1, y2 - y1)
