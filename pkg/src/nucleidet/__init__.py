"""Zero-shot nuclei detection pipeline.

Subpackages and modules:
  geometry     box arithmetic (IoU, NMS, square crops, clipping)
  data         COCO I/O, tiling, dataset splits, synthetic scenes
  evalkit      COCO-style detection metrics
  prompt_forge automatic "[shape][color][noun]" prompt synthesis
  backends     model capabilities: builtin stand-ins and the remote client
  selftrain    iterative pseudo-label self-training
  cli          command-line entry points
"""

from .geometry import BBox, Detection, clip, iou, iou_matrix, nms, square_expand

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Detection",
    "clip",
    "iou",
    "iou_matrix",
    "nms",
    "square_expand",
    "__version__",
]
