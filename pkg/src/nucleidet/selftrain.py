"""Iterative self-training: teacher labels -> student -> new labels.

Round 0 is the raw grounding teacher; each later round fits a student on
the current pseudo-labels, lets it relabel the training images, filters
(score threshold first, then NMS), and adopts the result. Convergence is
declared when consecutive rounds agree (pseudo-label stability, an
unsupervised signal) for `patience` rounds in a row. Ground truth, when
supplied at all, flows only into per-round test-set evaluation and never
into any label-producing path.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .backends.base import GroundingBackend, GroundingQuery, StudentBackend
from .backends.builtin import BlobStudent
from .data import Annotation, AnnotationSet, save_annotations
from .errors import ConfigurationError, DataValidationError
from .evalkit import EvalResult, evaluate
from .geometry import BBox, Detection, iou_matrix, nms
from .prompt_forge import PromptBundle, render_query

log = logging.getLogger(__name__)

DEFAULT_MAX_RESULTS = 2000


@dataclass(frozen=True)
class SelfTrainConfig:
    """Loop controls. `label_merge` "replace" swaps each round's labels in
    wholesale; the experimental "union" keeps the teacher's boxes too,
    deduplicated by the same NMS."""

    max_rounds: int = 5
    score_threshold: float = 0.25
    nms_threshold: float = 0.5
    stability_epsilon: float = 0.02
    patience: int = 2
    seed: int = 0
    label_merge: str = "replace"

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ConfigurationError("max_rounds must be >= 1")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.label_merge not in ("replace", "union"):
            raise ConfigurationError("label_merge must be 'replace' or 'union'")
        for name in ("score_threshold", "nms_threshold", "stability_epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")


@dataclass
class RoundReport:
    """Per-round record mirroring a teacher/students progress table.

    `accepted` flags rounds whose stability reached 1 - stability_epsilon
    (they count toward the convergence patience); round 0 has no previous
    round and reports stability 0.
    """

    round_index: int
    pseudo_label_ref: str
    filter_config: dict[str, float]
    stability_vs_previous: float
    accepted: bool
    metrics_vs_gt: EvalResult | None = None

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "pseudo_label_ref": self.pseudo_label_ref,
            "filter_config": dict(self.filter_config),
            "stability_vs_previous": self.stability_vs_previous,
            "accepted": self.accepted,
            "metrics_vs_gt": None if self.metrics_vs_gt is None else self.metrics_vs_gt.to_dict(),
        }


@dataclass
class RunResult:
    rounds: list[RoundReport] = field(default_factory=list)
    best_round: int = 0
    converged: bool = False


def filter_detections(
    dets: list[Detection], score_threshold: float, nms_threshold: float
) -> list[Detection]:
    """Score gate first (drop low-confidence noise), then NMS."""
    kept = [d for d in dets if d.score >= score_threshold]
    return nms(kept, nms_threshold)


def _to_annotations(dets: list[Detection]) -> list[Annotation]:
    return [Annotation(d.box, 1, d.score) for d in dets]


def bootstrap_pseudo_labels(
    grounder: GroundingBackend,
    prompts: PromptBundle,
    train_images: AnnotationSet,
    *,
    score_threshold: float,
    nms_threshold: float,
    strategy: str = "concatenated",
    max_results: int = DEFAULT_MAX_RESULTS,
    image_store: Mapping[int, np.ndarray] | None = None,
    image_root: str | Path | None = None,
) -> AnnotationSet:
    """Detect with the prompt bundle on every training image and filter.

    `train_images` supplies the image universe only; its annotations (if
    any) are ignored. Per-query detections are merged before filtering,
    which also deduplicates overlaps across per-triplet queries.
    """
    queries = render_query(prompts, strategy)
    annotations: dict[int, list[Annotation]] = {}
    for rec in train_images.images:
        merged: list[Detection] = []
        for q in queries:
            query = GroundingQuery(
                image_id=rec.id,
                query=q,
                score_threshold=score_threshold,
                max_results=max_results,
                image=None if image_store is None else image_store.get(rec.id),
                image_path=None if image_root is None else str(Path(image_root) / rec.file_name),
            )
            try:
                merged.extend(grounder.ground(query))
            except Exception as exc:
                raise type(exc)(f"grounding failed on image {rec.id}: {exc}") from exc
        kept = filter_detections(merged, score_threshold, nms_threshold)
        if kept:
            annotations[rec.id] = _to_annotations(kept)
    return train_images.bare().with_annotations(annotations)


def stability(a: AnnotationSet, b: AnnotationSet) -> float:
    """F1 agreement at IoU 0.5 between two label sets, symmetric.

    Per image, candidate pairs above 0.5 IoU are accepted greedily by
    descending IoU with one-to-one use of boxes on both sides; F1 is
    2*matches / (|a| + |b|). Two empty sets agree perfectly by convention.
    """
    if sorted(a.image_ids()) != sorted(b.image_ids()):
        raise DataValidationError("stability requires identical image universes")
    n_a = a.n_annotations()
    n_b = b.n_annotations()
    if n_a == 0 and n_b == 0:
        return 1.0
    if n_a == 0 or n_b == 0:
        return 0.0
    matches = 0
    for image_id in sorted(a.image_ids()):
        boxes_a = sorted((x.box for x in a.anns_for(image_id)), key=lambda v: (v.x, v.y, v.w, v.h))
        boxes_b = sorted((x.box for x in b.anns_for(image_id)), key=lambda v: (v.x, v.y, v.w, v.h))
        if not boxes_a or not boxes_b:
            continue
        mat = iou_matrix(boxes_a, boxes_b)
        pairs = [
            (float(mat[i, j]), i, j)
            for i in range(len(boxes_a))
            for j in range(len(boxes_b))
            if mat[i, j] >= 0.5
        ]
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        used_a: set[int] = set()
        used_b: set[int] = set()
        for _, i, j in pairs:
            if i in used_a or j in used_b:
                continue
            used_a.add(i)
            used_b.add(j)
            matches += 1
    return 2.0 * matches / (n_a + n_b)


def run_round(
    teacher_labels: AnnotationSet,
    images: Mapping[int, np.ndarray],
    cfg: SelfTrainConfig,
    student: StudentBackend,
    round_index: int,
) -> tuple[object, AnnotationSet, RoundReport]:
    """Fit a student on the teacher's labels and let it relabel the set."""
    model = student.fit(teacher_labels, images)
    annotations: dict[int, list[Annotation]] = {}
    for image_id in sorted(teacher_labels.image_ids()):
        dets = student.detect(model, images[image_id])
        if cfg.label_merge == "union":
            dets = dets + [
                Detection(a.box, 1.0 if a.score is None else a.score)
                for a in teacher_labels.anns_for(image_id)
            ]
        kept = filter_detections(dets, cfg.score_threshold, cfg.nms_threshold)
        if kept:
            annotations[image_id] = _to_annotations(kept)
    new_labels = teacher_labels.with_annotations(annotations)
    agreement = stability(new_labels, teacher_labels)
    report = RoundReport(
        round_index=round_index,
        pseudo_label_ref="",
        filter_config={
            "score_threshold": cfg.score_threshold,
            "nms_threshold": cfg.nms_threshold,
        },
        stability_vs_previous=agreement,
        accepted=agreement >= 1.0 - cfg.stability_epsilon,
    )
    return model, new_labels, report


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str | Path, payload) -> None:
    """Write JSON with the run directory's write-temp-then-rename discipline."""
    _atomic_write_text(Path(path), json.dumps(payload, indent=2) + "\n")


def _persist_round(run_dir: Path | None, report: RoundReport, labels: AnnotationSet) -> None:
    if run_dir is None:
        report.pseudo_label_ref = f"round-{report.round_index}"
        return
    round_dir = run_dir / "rounds" / str(report.round_index)
    round_dir.mkdir(parents=True, exist_ok=True)
    labels_path = round_dir / "pseudo_labels.json"
    save_annotations(labels, labels_path)
    report.pseudo_label_ref = str(labels_path.relative_to(run_dir))
    _atomic_write_text(round_dir / "report.json", json.dumps(report.to_dict(), indent=2) + "\n")


def _test_metrics(
    model,
    student: StudentBackend,
    cfg: SelfTrainConfig,
    test_gt: AnnotationSet,
    test_images: Mapping[int, np.ndarray],
) -> EvalResult:
    annotations: dict[int, list[Annotation]] = {}
    for image_id in sorted(test_gt.image_ids()):
        dets = student.detect(model, test_images[image_id])
        kept = filter_detections(dets, cfg.score_threshold, cfg.nms_threshold)
        if kept:
            annotations[image_id] = _to_annotations(kept)
    pred = test_gt.bare().with_annotations(annotations)
    return evaluate(pred, test_gt)


def run_self_training(
    source: GroundingBackend | AnnotationSet,
    train_images: AnnotationSet,
    images: Mapping[int, np.ndarray],
    cfg: SelfTrainConfig,
    *,
    student: StudentBackend | None = None,
    prompts: PromptBundle | None = None,
    strategy: str = "concatenated",
    test_gt: AnnotationSet | None = None,
    test_images: Mapping[int, np.ndarray] | None = None,
    test_grounder_metrics: bool = True,
    run_dir: str | Path | None = None,
) -> RunResult:
    """Run the full teacher -> student loop until stable or out of rounds.

    `source` is either a grounding backend (round 0 bootstraps from it,
    using `prompts`) or a ready round-0 pseudo-label set. When `test_gt`
    and `test_images` are given, every round is also scored on the test
    set; those labels are never fed back. Snapshots and reports land under
    `run_dir` when given (atomic writes).

    The best round is the one with the highest test AP50 when ground truth
    was supplied, otherwise the final round.
    """
    student = student or BlobStudent()
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    if isinstance(source, AnnotationSet):
        labels = source
        grounder = None
    else:
        grounder = source
        if prompts is None:
            raise ConfigurationError("bootstrapping from a grounder requires a prompt bundle")
        labels = bootstrap_pseudo_labels(
            grounder,
            prompts,
            train_images,
            score_threshold=cfg.score_threshold,
            nms_threshold=cfg.nms_threshold,
            strategy=strategy,
            image_store=images,
        )

    report0 = RoundReport(
        round_index=0,
        pseudo_label_ref="",
        filter_config={
            "score_threshold": cfg.score_threshold,
            "nms_threshold": cfg.nms_threshold,
        },
        stability_vs_previous=0.0,
        accepted=False,
    )
    if test_gt is not None and test_images is not None and grounder is not None and test_grounder_metrics:
        if prompts is None:
            raise ConfigurationError("round-0 test metrics require a prompt bundle")
        pred0 = bootstrap_pseudo_labels(
            grounder,
            prompts,
            test_gt.bare(),
            score_threshold=cfg.score_threshold,
            nms_threshold=cfg.nms_threshold,
            strategy=strategy,
            image_store=test_images,
        )
        report0.metrics_vs_gt = evaluate(pred0, test_gt)
    _persist_round(run_dir, report0, labels)

    result = RunResult(rounds=[report0])
    stable_streak = 0
    for k in range(1, cfg.max_rounds + 1):
        model, labels, report = run_round(labels, images, cfg, student, k)
        if test_gt is not None and test_images is not None:
            report.metrics_vs_gt = _test_metrics(model, student, cfg, test_gt, test_images)
        _persist_round(run_dir, report, labels)
        result.rounds.append(report)
        log.info(
            "round %d: stability %.3f%s",
            k,
            report.stability_vs_previous,
            "" if report.metrics_vs_gt is None
            else f", test AP50 {report.metrics_vs_gt.ap50:.3f}",
        )
        stable_streak = stable_streak + 1 if report.accepted else 0
        if stable_streak >= cfg.patience:
            result.converged = True
            break

    scored = [r for r in result.rounds if r.metrics_vs_gt is not None]
    if scored:
        result.best_round = max(scored, key=lambda r: r.metrics_vs_gt.ap50).round_index
    else:
        result.best_round = result.rounds[-1].round_index

    if run_dir is not None:
        summary = {
            "best_round": result.best_round,
            "converged": result.converged,
            "convergence_criterion": "pseudo_label_stability",
            "n_rounds": len(result.rounds),
            "config": {
                "max_rounds": cfg.max_rounds,
                "score_threshold": cfg.score_threshold,
                "nms_threshold": cfg.nms_threshold,
                "stability_epsilon": cfg.stability_epsilon,
                "patience": cfg.patience,
                "seed": cfg.seed,
                "label_merge": cfg.label_merge,
            },
        }
        _atomic_write_text(run_dir / "run_summary.json", json.dumps(summary, indent=2) + "\n")
    return result
