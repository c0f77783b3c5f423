"""
Box arithmetic: IoU, greedy NMS, square crops, clipping
=======================================================

The geometry module is the substrate everything else stands on. Boxes are
COCO-style (x, y, w, h) values with the origin top-left.
"""

from nucleidet import BBox, Detection, clip, iou, nms, square_expand

# Two boxes sharing half their width: intersection 50, union 150.
a = BBox(0, 0, 10, 10)
b = BBox(5, 0, 10, 10)
print(f"iou(a, b) = {iou(a, b):.4f}   (expected 50/150 = 0.3333)")

# Greedy NMS keeps the best-scored box of each overlapping cluster.
# Dense nuclei produce heavy overlap, so the threshold matters: the second
# box below overlaps the first at IoU ~0.54.
dets = [
    Detection(BBox(0, 0, 10, 10), 0.9),
    Detection(BBox(3, 0, 10, 10), 0.8),   # probably the same nucleus
    Detection(BBox(30, 30, 8, 8), 0.6),   # a different one
]
for thr in (0.3, 0.7):
    kept = nms(dets, thr)
    print(f"nms at {thr}: kept {len(kept)} of {len(dets)} "
          f"(scores {[d.score for d in kept]})")

# Captioning wants square crops at a consistent scale. Near borders the
# square is translated into the image, never shrunk.
box = BBox(10, 20, 20, 40)
print(f"square_expand({box.as_xywh()}) in 100x100 ->",
      square_expand(box, 100, 100).as_xywh())

# Clipping intersects a box with the image; fully-outside boxes are an error.
print(f"clip([-5, -5, 20, 20])          in 100x100 ->",
      clip(BBox(-5, -5, 20, 20), 100, 100).as_xywh())
