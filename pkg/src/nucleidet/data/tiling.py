"""Tiling, cropping, annotation projection, stitching, dataset splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..geometry import BBox, Detection, EmptyClipError, clip, nms
from .model import Annotation, AnnotationSet, ImageRecord, TileSpec

DEFAULT_MIN_OVERLAP = 0.3


def _axis_origins(dim: int, tile: int, n: int) -> list[int]:
    if tile > dim:
        raise ConfigurationError(f"tile size {tile} exceeds image dimension {dim}")
    if n == 1:
        return [0]
    stride = (dim - tile) // (n - 1)
    if stride > tile:
        raise ConfigurationError(
            f"{n} tiles of {tile} cannot cover a dimension of {dim}"
        )
    return [i * stride for i in range(n - 1)] + [dim - tile]


def tile_origins(image_w: int, image_h: int, spec: TileSpec) -> list[BBox]:
    """Evenly spaced grid_n x grid_n tiles, last row/column flush to the edge.

    The stride is floor((dim - tile_size) / (grid_n - 1)) per axis, so the
    tiles overlap and collectively cover the whole image. Returned row-major.
    """
    xs = _axis_origins(image_w, spec.tile_size, spec.grid_n)
    ys = _axis_origins(image_h, spec.tile_size, spec.grid_n)
    return [
        BBox(float(ox), float(oy), float(spec.tile_size), float(spec.tile_size))
        for oy in ys
        for ox in xs
    ]


def random_crop(tile: BBox, crop_size: int, rng_seed: int) -> BBox:
    """Seed-deterministic crop of `crop_size` fully inside the tile.

    Offsets are drawn uniformly (x first, then y) from the valid range.
    """
    max_dx = int(tile.w) - crop_size
    max_dy = int(tile.h) - crop_size
    if max_dx < 0 or max_dy < 0:
        raise ConfigurationError(f"crop {crop_size} larger than tile {tile.as_xywh()}")
    rng = np.random.default_rng(rng_seed)
    dx = int(rng.integers(0, max_dx + 1))
    dy = int(rng.integers(0, max_dy + 1))
    return BBox(tile.x + dx, tile.y + dy, float(crop_size), float(crop_size))


def project_annotations(
    aset: AnnotationSet, region: BBox, min_overlap: float = DEFAULT_MIN_OVERLAP
) -> AnnotationSet:
    """Carry annotations into a region's coordinate frame.

    The region is interpreted in each image's own frame. Boxes are
    translated and clipped; a box is retained iff its clipped area is at
    least `min_overlap` of its original area, so boundary objects survive
    while slivers do not.
    """
    new_w = int(round(region.w))
    new_h = int(round(region.h))
    images = [
        ImageRecord(rec.id, rec.file_name, new_w, new_h) for rec in aset.images
    ]
    annotations: dict[int, list[Annotation]] = {}
    for rec in aset.images:
        kept = []
        for ann in aset.anns_for(rec.id):
            moved = ann.box.translate(-region.x, -region.y)
            try:
                clipped = clip(moved, new_w, new_h)
            except EmptyClipError:
                continue
            if clipped.area / ann.box.area >= min_overlap:
                kept.append(Annotation(clipped, ann.category_id, ann.score))
        if kept:
            annotations[rec.id] = kept
    return AnnotationSet(images=images, annotations=annotations, categories=list(aset.categories))


def stitch_detections(
    per_tile: dict[int, list[Detection]],
    origins: list[BBox],
    nms_threshold: float,
) -> list[Detection]:
    """Re-project per-tile detections into image coordinates and cross-NMS."""
    merged: list[Detection] = []
    for idx, dets in sorted(per_tile.items()):
        origin = origins[idx]
        for det in dets:
            merged.append(
                Detection(det.box.translate(origin.x, origin.y), det.score, det.phrase)
            )
    return nms(merged, nms_threshold)


def _patch_id(image_id: int, tile_index: int, spec: TileSpec) -> int:
    return image_id * spec.grid_n * spec.grid_n + tile_index


def tile_dataset(
    aset: AnnotationSet, spec: TileSpec, min_overlap: float = DEFAULT_MIN_OVERLAP
) -> AnnotationSet:
    """Project a dataset into per-tile patch coordinates.

    Each image becomes grid_n^2 patch records with ids remapped to
    image_id * grid_n^2 + tile_index; annotations are carried over with
    `project_annotations` semantics.
    """
    records = []
    annotations: dict[int, list[Annotation]] = {}
    for rec in aset.images:
        single = aset.subset([rec.id])
        stem, dot, ext = rec.file_name.rpartition(".")
        for k, origin in enumerate(tile_origins(rec.width, rec.height, spec)):
            pid = _patch_id(rec.id, k, spec)
            projected = project_annotations(single, origin, min_overlap)
            name = f"{stem or rec.file_name}_tile{k:02d}{dot}{ext}" if dot else f"{rec.file_name}_tile{k:02d}"
            records.append(ImageRecord(pid, name, spec.tile_size, spec.tile_size))
            kept = projected.anns_for(rec.id)
            if kept:
                annotations[pid] = kept
    return AnnotationSet(images=records, annotations=annotations, categories=list(aset.categories))


def tile_image_store(
    images: dict[int, np.ndarray], aset: AnnotationSet, spec: TileSpec
) -> dict[int, np.ndarray]:
    """Slice the pixel store to match `tile_dataset`'s patch ids."""
    out: dict[int, np.ndarray] = {}
    for rec in aset.images:
        image = images[rec.id]
        for k, origin in enumerate(tile_origins(rec.width, rec.height, spec)):
            x0, y0 = int(origin.x), int(origin.y)
            out[_patch_id(rec.id, k, spec)] = image[
                y0 : y0 + spec.tile_size, x0 : x0 + spec.tile_size
            ]
    return out


@dataclass(frozen=True)
class SplitResult:
    """Train/test partition; `val` is the subset of train flagged for validation."""

    train: AnnotationSet
    val: AnnotationSet
    test: AnnotationSet


def split_dataset(
    aset: AnnotationSet, train_n: int, test_n: int, val_n: int, seed: int
) -> SplitResult:
    """Seed-deterministic split into train/test, with val drawn from train."""
    ids = sorted(aset.image_ids())
    if train_n + test_n != len(ids):
        raise ConfigurationError(
            f"train_n + test_n = {train_n + test_n} but dataset has {len(ids)} images"
        )
    if val_n > train_n:
        raise ConfigurationError("val_n cannot exceed train_n")
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    train_ids = shuffled[:train_n]
    test_ids = shuffled[train_n:]
    val_ids = train_ids[:val_n]
    return SplitResult(
        train=aset.subset(train_ids),
        val=aset.subset(val_ids),
        test=aset.subset(test_ids),
    )
