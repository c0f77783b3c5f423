"""Dataset data model: image records, annotation sets, tiling/scene configs."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigurationError, DataValidationError
from ..geometry import BBox

_EPS = 1e-9


@dataclass(frozen=True)
class ImageRecord:
    """One image of a dataset; `file_name` is relative to the dataset root."""

    id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataValidationError(f"image {self.id} has non-positive size")


@dataclass(frozen=True)
class Annotation:
    """A ground-truth or pseudo-label box; pseudo-labels carry a score."""

    box: BBox
    category_id: int = 1
    score: float | None = None


@dataclass(frozen=True)
class Category:
    id: int
    name: str


def default_categories() -> list[Category]:
    return [Category(1, "nuclei")]


@dataclass
class AnnotationSet:
    """COCO-style collection: images, per-image annotations, categories.

    Annotations are keyed by image id; images without annotations simply
    have no entry. Every box must lie inside its image (clip before
    constructing if needed).
    """

    images: list[ImageRecord] = field(default_factory=list)
    annotations: dict[int, list[Annotation]] = field(default_factory=dict)
    categories: list[Category] = field(default_factory=default_categories)

    def __post_init__(self):
        ids = [rec.id for rec in self.images]
        if len(ids) != len(set(ids)):
            raise DataValidationError("duplicate image ids")
        by_id = {rec.id: rec for rec in self.images}
        self.annotations = {
            img_id: list(anns) for img_id, anns in self.annotations.items() if anns
        }
        for img_id, anns in self.annotations.items():
            rec = by_id.get(img_id)
            if rec is None:
                raise DataValidationError(
                    f"annotation references unknown image id {img_id}"
                )
            for ann in anns:
                box = ann.box
                if (
                    box.x < -_EPS
                    or box.y < -_EPS
                    or box.x2 > rec.width + _EPS
                    or box.y2 > rec.height + _EPS
                ):
                    raise DataValidationError(
                        f"box {box.as_xywh()} exceeds image {img_id} "
                        f"({rec.width}x{rec.height})"
                    )

    def image_ids(self) -> list[int]:
        return [rec.id for rec in self.images]

    def record(self, image_id: int) -> ImageRecord:
        for rec in self.images:
            if rec.id == image_id:
                return rec
        raise KeyError(image_id)

    def anns_for(self, image_id: int) -> list[Annotation]:
        return self.annotations.get(image_id, [])

    def n_annotations(self) -> int:
        return sum(len(v) for v in self.annotations.values())

    def subset(self, image_ids) -> "AnnotationSet":
        """New set restricted to the given image ids, original order kept."""
        wanted = set(image_ids)
        images = [rec for rec in self.images if rec.id in wanted]
        missing = wanted - {rec.id for rec in images}
        if missing:
            raise DataValidationError(f"unknown image ids in subset: {sorted(missing)}")
        anns = {i: list(self.annotations[i]) for i in self.annotations if i in wanted}
        return AnnotationSet(images=images, annotations=anns, categories=list(self.categories))

    def with_annotations(self, annotations: dict[int, list[Annotation]]) -> "AnnotationSet":
        """Same images/categories, different annotations."""
        return AnnotationSet(
            images=list(self.images),
            annotations=annotations,
            categories=list(self.categories),
        )

    def bare(self) -> "AnnotationSet":
        """Label-free view: the image universe with no annotations."""
        return self.with_annotations({})


@dataclass(frozen=True)
class TileSpec:
    """Overlapping tiling grid plus the random-crop size used inside tiles."""

    tile_size: int
    grid_n: int
    crop_size: int

    def __post_init__(self):
        if self.grid_n < 1:
            raise ConfigurationError("grid_n must be >= 1")
        if self.tile_size < 1:
            raise ConfigurationError("tile_size must be >= 1")
        if not 1 <= self.crop_size <= self.tile_size:
            raise ConfigurationError("crop_size must lie in [1, tile_size]")


@dataclass(frozen=True)
class SyntheticSceneConfig:
    """Deterministic stand-in scene: filled ellipses on a light background."""

    image_size: int = 128
    object_count_range: tuple[int, int] = (14, 22)
    radius_range: tuple[float, float] = (4.0, 9.0)
    fill_color_palette: tuple[tuple[int, int, int], ...] = (
        (96, 58, 140),
        (70, 48, 120),
        (118, 70, 158),
        (58, 64, 130),
    )
    background_color: tuple[int, int, int] = (236, 228, 238)
    seed: int = 0
    min_separation: int = 2

    def __post_init__(self):
        lo, hi = self.object_count_range
        if lo < 0 or hi < lo:
            raise ConfigurationError("object_count_range must be 0 <= min <= max")
        rlo, rhi = self.radius_range
        if rlo < 1 or rhi < rlo:
            raise ConfigurationError("radius_range must be 1 <= min <= max")
        if not self.fill_color_palette:
            raise ConfigurationError("fill_color_palette must be non-empty")
        if self.image_size < int(2 * rhi) + 4:
            raise ConfigurationError("image_size too small for radius_range")
