"""
COCO-style detection metrics
============================

The evaluator reports AP over the 0.50:0.05:0.95 IoU sweep (mAP), AP at
fixed 0.5 / 0.75, average recall, and the plain precision/recall of the
full detection set at IoU 0.5. This script degrades a perfect prediction
step by step and watches the metrics respond.
"""

import numpy as np

from nucleidet.data import Annotation, SyntheticSceneConfig, generate_synthetic_dataset
from nucleidet.evalkit import evaluate, format_table
from nucleidet.geometry import BBox

images, gt = generate_synthetic_dataset(SyntheticSceneConfig(seed=3), count=6)
rng = np.random.default_rng(3)


def scored_copy(drop=0.0, jitter=0.0, extra_fp=0):
    annotations = {}
    for rec in gt.images:
        anns = []
        for a in gt.anns_for(rec.id):
            if rng.random() < drop:
                continue
            jx, jy = rng.uniform(-jitter, jitter, size=2)
            x = min(max(a.box.x + jx, 0.0), rec.width - a.box.w)
            y = min(max(a.box.y + jy, 0.0), rec.height - a.box.h)
            anns.append(Annotation(BBox(x, y, a.box.w, a.box.h), 1, float(rng.uniform(0.6, 1.0))))
        for _ in range(extra_fp):
            anns.append(Annotation(BBox(float(rng.uniform(0, 100)), float(rng.uniform(0, 100)), 8, 8),
                                   1, float(rng.uniform(0.0, 0.5))))
        annotations[rec.id] = anns
    return gt.bare().with_annotations(annotations)


for label, pred in [
    ("perfect", scored_copy()),
    ("2px jitter", scored_copy(jitter=2.0)),
    ("30% dropped", scored_copy(drop=0.3)),
    ("plus 5 low-score FPs/image", scored_copy(drop=0.3, jitter=2.0, extra_fp=5)),
]:
    result = evaluate(pred, gt)
    print(f"--- {label}")
    print(format_table(result))
