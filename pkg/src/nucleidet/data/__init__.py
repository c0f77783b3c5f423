"""Dataset ingestion, tiling, COCO I/O, splitting, and synthetic scenes."""

from .coco import (
    annotation_set_to_coco,
    coco_to_annotation_set,
    dumps_annotations,
    load_annotations,
    save_annotations,
)
from .model import (
    Annotation,
    AnnotationSet,
    Category,
    ImageRecord,
    SyntheticSceneConfig,
    TileSpec,
    default_categories,
)
from .synthetic import (
    generate_synthetic_dataset,
    generate_synthetic_scene,
    load_image,
    load_image_store,
    save_image,
    write_dataset,
)
from .tiling import (
    DEFAULT_MIN_OVERLAP,
    SplitResult,
    project_annotations,
    random_crop,
    split_dataset,
    stitch_detections,
    tile_dataset,
    tile_image_store,
    tile_origins,
)

__all__ = [
    "Annotation",
    "AnnotationSet",
    "Category",
    "ImageRecord",
    "SyntheticSceneConfig",
    "TileSpec",
    "SplitResult",
    "DEFAULT_MIN_OVERLAP",
    "annotation_set_to_coco",
    "coco_to_annotation_set",
    "default_categories",
    "dumps_annotations",
    "generate_synthetic_dataset",
    "generate_synthetic_scene",
    "load_annotations",
    "load_image",
    "load_image_store",
    "project_annotations",
    "random_crop",
    "save_annotations",
    "save_image",
    "split_dataset",
    "stitch_detections",
    "tile_dataset",
    "tile_image_store",
    "tile_origins",
    "write_dataset",
]
