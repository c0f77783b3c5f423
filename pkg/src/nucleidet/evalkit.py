"""COCO-style detection evaluation for a single category.

Metrics: AP per IoU threshold in {0.50:0.05:0.95} with 101-point
interpolation, their mean (mAP), AP50/AP75, average recall over the
threshold sweep, and the precision/recall of the full detection set at
IoU 0.5. Detections are pooled across images with the image association
preserved; ties in the global ranking are broken by (image id, per-image
rank) so results are order-independent and reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import AnnotationSet
from .errors import DataValidationError
from .geometry import BBox, Detection, iou_matrix

log = logging.getLogger(__name__)

IOU_THRESHOLDS = tuple((50 + 5 * i) / 100.0 for i in range(10))
DEFAULT_MAX_DETS = 1000

_RECALL_GRID = np.array([i / 100.0 for i in range(101)])


@dataclass(frozen=True)
class DetMatch:
    score: float
    matched: bool
    iou_with_match: float


@dataclass(frozen=True)
class MatchResult:
    """Greedy match of one image's detections against its ground truth.

    `detections` are in evaluation order (score descending); `gt_matched`
    follows the deterministic (x, y, w, h)-sorted ground-truth order.
    """

    detections: list[DetMatch]
    gt_matched: list[bool]


@dataclass
class EvalResult:
    map: float
    ap50: float
    ap75: float
    ar: float
    precision50: float
    recall50: float
    pr_curves: dict[float, list[tuple[float, float]]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, float]:
        return {
            "map": self.map,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ar": self.ar,
            "precision50": self.precision50,
            "recall50": self.recall50,
        }


def _det_order(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w, d.box.h))


def _gt_order(gts: list[BBox]) -> list[BBox]:
    return sorted(gts, key=lambda b: (b.x, b.y, b.w, b.h))


def _det_gt_ious(dets: list[Detection], gts: list[BBox]) -> np.ndarray:
    return iou_matrix([d.box for d in dets], gts)


def _greedy_assign(iou_mat: np.ndarray, thr: float) -> tuple[list[bool], list[float], list[bool]]:
    """Each detection (row order) claims the unmatched GT of highest IoU >= thr."""
    n_det, n_gt = iou_mat.shape
    used = np.zeros(n_gt, dtype=bool)
    det_flags: list[bool] = []
    det_ious: list[float] = []
    for i in range(n_det):
        if n_gt == 0:
            det_flags.append(False)
            det_ious.append(0.0)
            continue
        row = np.where(used, -1.0, iou_mat[i])
        j = int(np.argmax(row))
        if row[j] >= thr:
            used[j] = True
            det_flags.append(True)
            det_ious.append(float(row[j]))
        else:
            det_flags.append(False)
            det_ious.append(0.0)
    return det_flags, det_ious, used.tolist()


def match(dets: list[Detection], gts: list[BBox], iou_threshold: float) -> MatchResult:
    """Greedy COCO-protocol matching for a single image and category."""
    ordered = _det_order(dets)
    gts_sorted = _gt_order(gts)
    flags, ious, gt_used = _greedy_assign(_det_gt_ious(ordered, gts_sorted), iou_threshold)
    return MatchResult(
        detections=[
            DetMatch(d.score, f, v) for d, f, v in zip(ordered, flags, ious)
        ],
        gt_matched=gt_used,
    )


def average_precision(pr_points) -> float:
    """101-point interpolated AP from raw (recall, precision) points.

    For each recall level r on the {0, 0.01, ..., 1.00} grid the
    interpolated precision is the maximum precision among points whose
    recall is >= r (0 when none). Empty input yields 0.
    """
    points = list(pr_points)
    if not points:
        return 0.0
    recalls = np.array([p[0] for p in points])
    precisions = np.array([p[1] for p in points])
    order = np.argsort(recalls, kind="stable")
    recalls = recalls[order]
    envelope = np.maximum.accumulate(precisions[order][::-1])[::-1]
    idx = np.searchsorted(recalls, _RECALL_GRID, side="left")
    interp = np.where(idx < len(recalls), envelope[np.minimum(idx, len(recalls) - 1)], 0.0)
    return float(np.sum(interp) / 101.0)


def evaluate(
    pred: AnnotationSet, gt: AnnotationSet, max_dets: int = DEFAULT_MAX_DETS
) -> EvalResult:
    """Evaluate predicted boxes against ground truth over the IoU sweep.

    Predictions without a score are treated as score 1.0. Per image at most
    `max_dets` highest-scoring detections are kept (the COCO default of 100
    is too low for dense nuclei, hence the raised default).
    """
    pred_ids = sorted(pred.image_ids())
    gt_ids = sorted(gt.image_ids())
    if pred_ids != gt_ids:
        raise DataValidationError(
            f"prediction/ground-truth image ids differ: {pred_ids} vs {gt_ids}"
        )

    per_image: list[tuple[int, list[Detection], np.ndarray]] = []
    n_gt = 0
    for img_id in gt_ids:
        dets = [
            Detection(a.box, 1.0 if a.score is None else a.score)
            for a in pred.anns_for(img_id)
        ]
        dets = _det_order(dets)[:max_dets]
        gts = _gt_order([a.box for a in gt.anns_for(img_id)])
        n_gt += len(gts)
        per_image.append((img_id, dets, _det_gt_ious(dets, gts)))

    if n_gt == 0:
        log.warning("evaluate: ground truth is empty; AP defined as 0")

    aps: dict[float, float] = {}
    recalls: dict[float, float] = {}
    curves: dict[float, list[tuple[float, float]]] = {}
    precision50 = recall50 = 0.0
    for thr in IOU_THRESHOLDS:
        records = []  # (-score, image_id, rank) keyed rows with tp flag
        total_tp = 0
        for img_id, dets, mat in per_image:
            flags, _, _ = _greedy_assign(mat, thr)
            for rank, (det, tp) in enumerate(zip(dets, flags)):
                records.append(((-det.score, img_id, rank), tp))
        records.sort(key=lambda r: r[0])
        tps = np.array([tp for _, tp in records], dtype=np.int64)
        points: list[tuple[float, float]] = []
        if len(tps) and n_gt > 0:
            cum = np.cumsum(tps)
            ranks = np.arange(1, len(tps) + 1)
            points = list(zip((cum / n_gt).tolist(), (cum / ranks).tolist()))
            total_tp = int(cum[-1])
        elif len(tps):
            total_tp = int(np.sum(tps))
        aps[thr] = average_precision(points) if n_gt > 0 else 0.0
        recalls[thr] = (total_tp / n_gt) if n_gt > 0 else 0.0
        curves[thr] = points
        if thr == 0.5:
            precision50 = (total_tp / len(tps)) if len(tps) else 0.0
            recall50 = recalls[thr]

    return EvalResult(
        map=float(sum(aps.values()) / len(aps)),
        ap50=aps[0.5],
        ap75=aps[0.75],
        ar=float(sum(recalls.values()) / len(recalls)),
        precision50=precision50,
        recall50=recall50,
        pr_curves=curves,
    )


def format_table(result: EvalResult) -> str:
    """Human-readable metric row, Table-1 style column layout."""
    headers = ["mAP", "AP50", "AP75", "AR", "P@50", "R@50"]
    values = [
        result.map, result.ap50, result.ap75, result.ar,
        result.precision50, result.recall50,
    ]
    head = " ".join(f"{h:>7}" for h in headers)
    row = " ".join(f"{v:7.3f}" for v in values)
    return head + "\n" + row


def to_csv(result: EvalResult) -> str:
    """Flat machine-readable report: one header line, one value line."""
    keys = ["map", "ap50", "ap75", "ar", "precision50", "recall50"]
    d = result.to_dict()
    return ",".join(keys) + "\n" + ",".join(repr(d[k]) for k in keys) + "\n"
