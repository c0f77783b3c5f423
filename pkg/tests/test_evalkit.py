import numpy as np
import pytest

from nucleidet.data import Annotation, AnnotationSet, ImageRecord
from nucleidet.errors import DataValidationError
from nucleidet.evalkit import (
    EvalResult,
    average_precision,
    evaluate,
    format_table,
    match,
    to_csv,
)
from nucleidet.geometry import BBox, Detection

from helpers import (
    detections_as_plain,
    gts_as_plain,
    random_annotation_set,
    random_predictions_for,
)
from oracles import brute_force_evaluate, interpolated_ap


class TestMatch:
    def test_single_tp(self):
        dets = [Detection(BBox(0, 0, 10, 10), 0.9)]
        gts = [BBox(0, 4, 10, 10)]  # IoU = 6/14 ~ 0.43 < 0.5... use closer boxes
        gts = [BBox(0, 2, 10, 10)]  # IoU = 8/12 ~ 0.67
        result = match(dets, gts, 0.5)
        assert result.detections[0].matched
        assert result.gt_matched == [True]
        assert result.detections[0].iou_with_match == pytest.approx(8 / 12)

    def test_two_dets_one_gt(self):
        gts = [BBox(0, 0, 10, 10)]
        hi = Detection(BBox(0, 0, 10, 10), 0.9)
        lo = Detection(BBox(1, 0, 10, 10), 0.8)
        result = match([lo, hi], gts, 0.5)
        assert [d.score for d in result.detections] == [0.9, 0.8]
        assert [d.matched for d in result.detections] == [True, False]

    def test_no_dets_all_fn(self):
        result = match([], [BBox(0, 0, 5, 5)] * 0 + [BBox(0, 0, 5, 5), BBox(10, 10, 5, 5), BBox(20, 20, 5, 5)], 0.5)
        assert result.detections == []
        assert result.gt_matched == [False, False, False]

    def test_below_threshold_is_fp(self):
        result = match([Detection(BBox(0, 0, 10, 10), 0.9)], [BBox(8, 8, 10, 10)], 0.5)
        assert not result.detections[0].matched


class TestAveragePrecision:
    def test_perfect(self):
        # 3 dets, all TP, covering 3 GT
        points = [(1 / 3, 1.0), (2 / 3, 1.0), (1.0, 1.0)]
        assert average_precision(points) == pytest.approx(1.0)

    def test_tp_then_fp(self):
        # 1 GT; det1 TP (recall 1, precision 1), det2 FP (recall 1, precision 0.5)
        points = [(1.0, 1.0), (1.0, 0.5)]
        assert average_precision(points) == pytest.approx(1.0)
        assert interpolated_ap(points) == pytest.approx(1.0)

    def test_fp_then_tp(self):
        # 1 GT; det1 FP (recall 0, precision 0), det2 TP (recall 1, precision 0.5)
        points = [(0.0, 0.0), (1.0, 0.5)]
        assert average_precision(points) == pytest.approx(0.5)
        assert interpolated_ap(points) == pytest.approx(0.5)

    def test_empty(self):
        assert average_precision([]) == 0.0

    def test_matches_enumeration_oracle_on_random_curves(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            tps = rng.random(n) < 0.5
            n_gt = max(int(tps.sum()), 1)
            cum = np.cumsum(tps)
            points = [
                (cum[i] / n_gt, cum[i] / (i + 1)) for i in range(n)
            ]
            assert average_precision(points) == pytest.approx(
                interpolated_ap(points), abs=1e-12
            )


def _identity_pred(gt: AnnotationSet) -> AnnotationSet:
    return gt.with_annotations(
        {
            i: [Annotation(a.box, a.category_id, 1.0) for a in gt.anns_for(i)]
            for i in gt.image_ids()
        }
    )


class TestEvaluate:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(32)
        gt = random_annotation_set(rng)
        while gt.n_annotations() == 0:
            gt = random_annotation_set(rng)
        result = evaluate(_identity_pred(gt), gt)
        assert result.map == pytest.approx(1.0)
        assert result.ap50 == pytest.approx(1.0)
        assert result.ap75 == pytest.approx(1.0)
        assert result.ar == pytest.approx(1.0)
        assert result.precision50 == pytest.approx(1.0)
        assert result.recall50 == pytest.approx(1.0)

    def test_empty_predictions(self):
        rng = np.random.default_rng(33)
        gt = random_annotation_set(rng)
        result = evaluate(gt.bare(), gt)
        assert result.map == 0.0 and result.ap50 == 0.0
        assert result.ar == 0.0 and result.recall50 == 0.0

    def test_mismatched_universe_rejected(self):
        gt = AnnotationSet(images=[ImageRecord(0, "a.png", 10, 10)], annotations={})
        pred = AnnotationSet(images=[ImageRecord(1, "b.png", 10, 10)], annotations={})
        with pytest.raises(DataValidationError):
            evaluate(pred, gt)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(34)
        for _ in range(30):
            gt = random_annotation_set(rng, max_images=3, max_boxes=10, with_scores=False)
            pred = random_predictions_for(gt, rng)
            got = evaluate(pred, gt)
            want = brute_force_evaluate(detections_as_plain(pred), gts_as_plain(gt))
            for key, value in want.items():
                assert abs(getattr(got, key) - value) <= 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(35)
        gt = random_annotation_set(rng, max_images=3, with_scores=False)
        pred = gt.bare().with_annotations(
            {
                i: [
                    Annotation(a.box, 1, float(rng.uniform(0, 1)))
                    for a in gt.anns_for(i)
                ]
                for i in gt.image_ids()
            }
        )
        shuffled = pred.with_annotations(
            {
                i: list(reversed(pred.anns_for(i)))
                for i in pred.image_ids()
                if pred.anns_for(i)
            }
        )
        assert evaluate(pred, gt).to_dict() == evaluate(shuffled, gt).to_dict()

    def test_low_score_fp_never_increases_ap(self):
        rng = np.random.default_rng(36)
        for _ in range(20):
            gt = random_annotation_set(rng, max_images=2, max_boxes=6, with_scores=False)
            if gt.n_annotations() == 0:
                continue
            pred = gt.with_annotations(
                {
                    i: [Annotation(a.box, 1, float(rng.uniform(0.5, 1.0))) for a in gt.anns_for(i)]
                    for i in gt.image_ids()
                }
            )
            before = evaluate(pred, gt)
            img0 = pred.image_ids()[0]
            extra = Annotation(BBox(0.5, 0.5, 3, 3), 1, 0.01)
            anns = {i: list(pred.anns_for(i)) for i in pred.image_ids() if pred.anns_for(i)}
            anns.setdefault(img0, []).append(extra)
            after = evaluate(pred.with_annotations(anns), gt)
            assert after.map <= before.map + 1e-12
            assert after.ap50 <= before.ap50 + 1e-12

    def test_metrics_depend_only_on_ranking(self):
        rng = np.random.default_rng(37)
        gt = random_annotation_set(rng, max_images=3, with_scores=False)
        pred = gt.bare().with_annotations(
            {
                i: [Annotation(a.box, 1, float(rng.uniform(0, 0.9))) for a in gt.anns_for(i)]
                for i in gt.image_ids()
                if gt.anns_for(i)
            }
        )
        squeezed = pred.with_annotations(
            {
                i: [Annotation(a.box, 1, 0.5 + a.score / 2) for a in pred.anns_for(i)]
                for i in pred.image_ids()
                if pred.anns_for(i)
            }
        )
        assert evaluate(pred, gt).to_dict() == evaluate(squeezed, gt).to_dict()

    def test_max_dets_truncation(self):
        images = [ImageRecord(0, "a.png", 100, 100)]
        gt = AnnotationSet(
            images=images, annotations={0: [Annotation(BBox(10, 10, 10, 10))]}
        )
        # one TP at score 0.5 plus two disjoint higher-score FPs
        pred = gt.with_annotations(
            {
                0: [
                    Annotation(BBox(10, 10, 10, 10), 1, 0.5),
                    Annotation(BBox(50, 50, 10, 10), 1, 0.9),
                    Annotation(BBox(70, 70, 10, 10), 1, 0.8),
                ]
            }
        )
        full = evaluate(pred, gt, max_dets=3)
        truncated = evaluate(pred, gt, max_dets=2)
        assert full.recall50 == 1.0
        assert truncated.recall50 == 0.0  # the TP was truncated away


class TestReports:
    def test_table_and_csv(self):
        result = EvalResult(0.5, 0.8, 0.4, 0.6, 0.7, 0.3)
        table = format_table(result)
        assert "mAP" in table and "0.800" in table
        csv = to_csv(result)
        assert csv.splitlines()[0] == "map,ap50,ap75,ar,precision50,recall50"
        assert "0.8" in csv
