"""Deterministic synthetic nuclei scenes for desk-scale runs.

Scenes are filled ellipses on a light background, loosely echoing how
nuclei read in H&E stains (round/oval, purple/blue on pale tissue), so the
template captioner has realistic statistics to report. Ground-truth boxes
are the exact tight boxes of the rendered pixels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ConfigurationError
from ..geometry import BBox
from .model import Annotation, AnnotationSet, ImageRecord, SyntheticSceneConfig

_PLACEMENT_ATTEMPTS = 1000

# Per-scene seeds inside a dataset are derived with a large odd multiplier so
# nearby dataset seeds never share scene streams.
_SCENE_SEED_STRIDE = 1_000_003


def _render_ellipse(size: int, cx: float, cy: float, a: float, b: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return ((xs + 0.5 - cx) / a) ** 2 + ((ys + 0.5 - cy) / b) ** 2 <= 1.0


def _tight_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    return x0, y0, x1, y1


def _separated(box, others, gap):
    x0, y0, x1, y1 = box
    for ox0, oy0, ox1, oy1 in others:
        if x0 - gap < ox1 and ox0 - gap < x1 and y0 - gap < oy1 and oy0 - gap < y1:
            return False
    return True


def generate_synthetic_scene(
    cfg: SyntheticSceneConfig, image_id: int = 0, file_name: str | None = None
) -> tuple[np.ndarray, AnnotationSet]:
    """Render one scene; bit-identical output for identical config."""
    rng = np.random.default_rng(cfg.seed)
    size = cfg.image_size
    image = np.empty((size, size, 3), dtype=np.uint8)
    image[:, :] = cfg.background_color

    lo, hi = cfg.object_count_range
    count = int(rng.integers(lo, hi + 1))
    rlo, rhi = cfg.radius_range
    palette = np.array(cfg.fill_color_palette, dtype=np.uint8)

    placed: list[tuple[int, int, int, int]] = []
    boxes: list[BBox] = []
    for _ in range(count):
        for attempt in range(_PLACEMENT_ATTEMPTS):
            a = rng.uniform(rlo, rhi)
            b = rng.uniform(rlo, rhi)
            cx = rng.uniform(a + 1.0, size - a - 1.0)
            cy = rng.uniform(b + 1.0, size - b - 1.0)
            color = palette[int(rng.integers(len(palette)))]
            mask = _render_ellipse(size, cx, cy, a, b)
            if not mask.any():
                continue
            box = _tight_box(mask)
            if not _separated(box, placed, cfg.min_separation):
                continue
            image[mask] = color
            placed.append(box)
            x0, y0, x1, y1 = box
            boxes.append(BBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0)))
            break
        else:
            raise ConfigurationError(
                "could not place all objects; lower the count or radius range"
            )

    if file_name is None:
        file_name = f"scene_{image_id:04d}.png"
    record = ImageRecord(id=image_id, file_name=file_name, width=size, height=size)
    annotations = {image_id: [Annotation(box) for box in boxes]} if boxes else {}
    return image, AnnotationSet(images=[record], annotations=annotations)


def generate_synthetic_dataset(
    cfg: SyntheticSceneConfig, count: int
) -> tuple[dict[int, np.ndarray], AnnotationSet]:
    """Render `count` scenes with per-scene seeds derived from cfg.seed."""
    images: dict[int, np.ndarray] = {}
    records: list[ImageRecord] = []
    annotations: dict[int, list[Annotation]] = {}
    for i in range(count):
        scene_cfg = SyntheticSceneConfig(
            image_size=cfg.image_size,
            object_count_range=cfg.object_count_range,
            radius_range=cfg.radius_range,
            fill_color_palette=cfg.fill_color_palette,
            background_color=cfg.background_color,
            seed=cfg.seed * _SCENE_SEED_STRIDE + i,
            min_separation=cfg.min_separation,
        )
        image, aset = generate_synthetic_scene(scene_cfg, image_id=i, file_name=f"img_{i:04d}.png")
        images[i] = image
        records.extend(aset.images)
        annotations.update(aset.annotations)
    return images, AnnotationSet(images=records, annotations=annotations)


def save_image(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(image).save(str(path))


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(str(path)) as img:
        return np.asarray(img.convert("RGB"))


def load_image_store(aset: AnnotationSet, root: str | Path) -> dict[int, np.ndarray]:
    """Load every image of a set into memory, keyed by image id."""
    root = Path(root)
    return {rec.id: load_image(root / rec.file_name) for rec in aset.images}


def write_dataset(
    images: dict[int, np.ndarray], aset: AnnotationSet, out_dir: str | Path
) -> Path:
    """Write PNGs plus annotations.json under `out_dir`; returns the dir."""
    from .coco import save_annotations

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in aset.images:
        save_image(out / rec.file_name, images[rec.id])
    save_annotations(aset, out / "annotations.json")
    return out
