"""Deterministic builtin backends for desk-scale runs.

The grounding oracle perturbs known scene boxes with a tunable noise model
(drops, jitter, spurious boxes) so the teacher-quality regime of a real
zero-shot detector can be dialed in. The captioner reads hue and
eccentricity off the crop. The student is a classical blob detector whose
parameters are fit by grid search; it keeps the essential self-training
dynamic (the student smooths and generalizes past a noisy teacher) while
staying deterministic and GPU-free.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources as importlib_resources
from typing import Any, Iterator, Mapping

import numpy as np
from scipy import ndimage

from ..data import AnnotationSet
from ..errors import BackendError, ConfigurationError, FitError
from ..evalkit import match
from ..geometry import BBox, Detection, EmptyClipError, clip
from .base import GroundingQuery


# --------------------------------------------------------------------------
# Grounding oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleNoiseConfig:
    """Noise model: Bernoulli drops, uniform jitter, Poisson false positives.

    `score_distribution` is (tp_mean, fp_mean, spread); scores are normal
    draws clipped to [0, 1], so spread 0 gives exact means.
    """

    drop_rate: float = 0.0
    jitter_px: float = 0.0
    fp_rate: float = 0.0
    score_distribution: tuple[float, float, float] = (0.8, 0.45, 0.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ConfigurationError("drop_rate must lie in [0, 1]")
        if self.jitter_px < 0:
            raise ConfigurationError("jitter_px must be >= 0")
        if self.fp_rate < 0:
            raise ConfigurationError("fp_rate must be >= 0")


class OracleGrounder:
    """Simulated grounding backend: noisy views of a known scene.

    Holds the scene's box inventory and answers queries with dropped,
    jittered copies plus spurious boxes. The per-image random stream is
    derived from (seed, image id), so results are independent of call
    order and identical across repeated queries of the same image.
    """

    def __init__(self, scene: AnnotationSet, noise: OracleNoiseConfig | None = None):
        self._scene = scene
        self._noise = noise or OracleNoiseConfig()

    def ground(self, query: GroundingQuery) -> list[Detection]:
        try:
            rec = self._scene.record(query.image_id)
        except KeyError as exc:
            raise BackendError(f"oracle has no image {query.image_id}") from exc
        noise = self._noise
        rng = np.random.default_rng([noise.seed, query.image_id])
        boxes = sorted(
            (a.box for a in self._scene.anns_for(query.image_id)),
            key=lambda b: (b.x, b.y, b.w, b.h),
        )
        tp_mean, fp_mean, spread = noise.score_distribution

        n = len(boxes)
        keep = rng.random(n) >= noise.drop_rate
        jitter = rng.uniform(-noise.jitter_px, noise.jitter_px, size=(n, 4))
        tp_scores = np.clip(rng.normal(tp_mean, spread, size=n), 0.0, 1.0)

        dets: list[Detection] = []
        for i, box in enumerate(boxes):
            if not keep[i]:
                continue
            jx, jy, jw, jh = jitter[i]
            try:
                noisy = clip(
                    BBox(box.x + jx, box.y + jy, max(box.w + jw, 1.0), max(box.h + jh, 1.0)),
                    rec.width,
                    rec.height,
                )
            except EmptyClipError:
                continue
            dets.append(Detection(noisy, float(tp_scores[i]), query.query))

        n_fp = int(rng.poisson(noise.fp_rate))
        if n_fp:
            sides = [min(b.w, b.h) for b in boxes] + [max(b.w, b.h) for b in boxes]
            lo = max(min(sides), 2.0) if sides else 6.0
            hi = max(max(sides), lo) if sides else 20.0
            for _ in range(n_fp):
                w = float(rng.uniform(lo, hi))
                h = float(rng.uniform(lo, hi))
                w = min(w, rec.width - 1.0)
                h = min(h, rec.height - 1.0)
                x = float(rng.uniform(0.0, rec.width - w))
                y = float(rng.uniform(0.0, rec.height - h))
                score = float(np.clip(rng.normal(fp_mean, spread), 0.0, 1.0))
                dets.append(Detection(BBox(x, y, w, h), score, query.query))

        dets = [d for d in dets if d.score >= query.score_threshold]
        dets.sort(key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w, d.box.h))
        return dets[: query.max_results]


# --------------------------------------------------------------------------
# Captioners
# --------------------------------------------------------------------------

# RGB anchors for naming the dominant foreground color.
_COLOR_ANCHORS: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("purple", (112, 64, 150)),
    ("blue", (70, 90, 200)),
    ("black", (35, 35, 35)),
    ("magenta", (200, 60, 160)),
    ("violet", (150, 90, 210)),
    ("pink", (230, 150, 190)),
    ("red", (200, 50, 50)),
    ("green", (60, 160, 70)),
    ("yellow", (220, 210, 70)),
    ("brown", (140, 100, 60)),
    ("white", (245, 245, 245)),
    ("gray", (128, 128, 128)),
)

_FOREGROUND_DELTA = 40
_MIN_FOREGROUND_PIXELS = 4


class TemplateCaptioner:
    """Rule-based captioner: hue bucket + eccentricity bucket.

    Estimates the background from the crop border, segments the foreground
    by color distance, then names the nearest anchor color and a shape word
    from the second moments of the foreground mask. Stained objects are
    darker than tissue, so when a tight crop leaves the object on the
    border (inverting figure and ground) the darker region is taken as the
    object. Pure function of the pixels: the same crop always captions
    identically.
    """

    def caption(self, crop: np.ndarray) -> str:
        if crop.size == 0 or crop.shape[0] < 2 or crop.shape[1] < 2:
            return "a plain background"
        pixels = crop.astype(np.int64)
        border = np.concatenate(
            [pixels[0], pixels[-1], pixels[:, 0], pixels[:, -1]], axis=0
        )
        background = np.median(border, axis=0)
        distance = np.abs(pixels - background[None, None, :]).max(axis=2)
        mask = distance > _FOREGROUND_DELTA
        if mask.sum() < _MIN_FOREGROUND_PIXELS:
            return "a plain background"
        luma = pixels @ np.array([0.299, 0.587, 0.114])
        if np.median(luma[mask]) > np.median(luma[~mask]):
            mask = ~mask
            if mask.sum() < _MIN_FOREGROUND_PIXELS:
                return "a plain background"

        mean_color = pixels[mask].mean(axis=0)
        color = min(
            _COLOR_ANCHORS,
            key=lambda anchor: float(np.sum((mean_color - np.array(anchor[1])) ** 2)),
        )[0]

        ys, xs = np.nonzero(mask)
        coords = np.stack([xs, ys]).astype(np.float64)
        cov = np.cov(coords)
        eigenvalues = np.sort(np.linalg.eigvalsh(cov))
        ratio = float(np.sqrt(max(eigenvalues[0], 0.0) / max(eigenvalues[1], 1e-12)))
        if ratio >= 0.8:
            shape = "round"
        elif ratio >= 0.55:
            shape = "oval"
        else:
            shape = "oblong"
        article = "an" if shape[0] in "aeiou" else "a"
        return f"{article} {shape} {color} object"


class ScriptedCaptioner:
    """Replays a fixed caption list in call order (cycling by default)."""

    def __init__(self, captions, cycle: bool = True):
        self._captions = list(captions)
        self._cycle = cycle
        self._i = 0
        if not self._captions:
            raise ConfigurationError("scripted captioner needs at least one caption")

    def caption(self, crop: np.ndarray) -> str:
        if self._i >= len(self._captions):
            if not self._cycle:
                raise BackendError("scripted captioner ran out of captions")
            self._i = 0
        text = self._captions[self._i]
        self._i += 1
        return text


# --------------------------------------------------------------------------
# Synonyms
# --------------------------------------------------------------------------

class StaticSynonyms:
    """Table-driven synonym source; unknown words yield an empty list."""

    def __init__(self, table: Mapping[str, list[str]] | None = None):
        if table is None:
            text = (
                importlib_resources.files("nucleidet.resources")
                .joinpath("synonyms.json")
                .read_text()
            )
            table = json.loads(text)
        self._table = {k.lower(): [v.lower() for v in vals] for k, vals in table.items()}

    def synonyms(self, word: str, k: int) -> list[str]:
        if k < 0:
            raise ConfigurationError("k must be >= 0")
        word = word.lower()
        out: list[str] = []
        for candidate in self._table.get(word, []):
            if candidate != word and candidate not in out:
                out.append(candidate)
            if len(out) == k:
                break
        return out[:k]


# --------------------------------------------------------------------------
# Blob-detector student
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StudentParams:
    """Blob-detector parameters: luma threshold, area gate, gap bridging."""

    intensity_threshold: int
    min_area: int
    max_area: int
    merge_distance: int

    def __post_init__(self):
        if not 0 <= self.intensity_threshold <= 255:
            raise ConfigurationError("intensity_threshold must lie in [0, 255]")
        if not 0 <= self.min_area < self.max_area:
            raise ConfigurationError("need 0 <= min_area < max_area")
        if self.merge_distance < 0:
            raise ConfigurationError("merge_distance must be >= 0")


@dataclass(frozen=True)
class StudentSearchSpace:
    """Grid of candidate parameters; fit order follows field order here."""

    thresholds: tuple[int, ...] = (120, 140, 160, 180, 200)
    min_areas: tuple[int, ...] = (8, 16, 32)
    max_areas: tuple[int, ...] = (1600, 6400)
    merge_distances: tuple[int, ...] = (0, 3)

    def points(self) -> Iterator[StudentParams]:
        for thr, mn, mx, md in itertools.product(
            self.thresholds, self.min_areas, self.max_areas, self.merge_distances
        ):
            yield StudentParams(thr, mn, mx, md)


def _luma(image: np.ndarray) -> np.ndarray:
    rgb = image.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _components(image: np.ndarray, threshold: int, merge_distance: int):
    """Label dark regions; returns (area, x, y, w, h) per component."""
    mask = _luma(image) < threshold
    if merge_distance > 0:
        size = merge_distance + 1
        mask = ndimage.binary_closing(mask, structure=np.ones((size, size), dtype=bool))
    labels, n = ndimage.label(mask)
    out = []
    if n:
        areas = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
        for idx, sl in enumerate(ndimage.find_objects(labels)):
            y0, y1 = sl[0].start, sl[0].stop
            x0, x1 = sl[1].start, sl[1].stop
            out.append((float(areas[idx]), x0, y0, x1 - x0, y1 - y0))
    return out


def student_detect(params: StudentParams, image: np.ndarray) -> list[Detection]:
    """Threshold -> connected components -> area gate -> boxes.

    Score is the component's solidity (filled fraction of its box), which
    is high for compact nuclei-like blobs and low for stringy noise.
    """
    dets: list[Detection] = []
    for area, x, y, w, h in _components(
        image, params.intensity_threshold, params.merge_distance
    ):
        if not params.min_area <= area <= params.max_area:
            continue
        score = min(area / (w * h), 1.0)
        dets.append(Detection(BBox(float(x), float(y), float(w), float(h)), score))
    dets.sort(key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w, d.box.h))
    return dets


def score_student(
    params: StudentParams,
    labels: AnnotationSet,
    images: Mapping[int, np.ndarray],
    iou_threshold: float = 0.5,
) -> float:
    """F1 of the detector against the given labels over the labeled images."""
    tp = n_det = n_gt = 0
    for image_id in sorted(labels.image_ids()):
        dets = student_detect(params, images[image_id])
        gts = [a.box for a in labels.anns_for(image_id)]
        result = match(dets, gts, iou_threshold)
        tp += sum(1 for d in result.detections if d.matched)
        n_det += len(dets)
        n_gt += len(gts)
    if n_det + n_gt == 0:
        return 0.0
    return 2.0 * tp / (n_det + n_gt)


class BlobStudent:
    """Classical trainable detector fit by exhaustive grid search.

    fit() maximizes F1 at IoU 0.5 against the pseudo-labels over the grid;
    ties keep the first point in grid order, so fitting is deterministic.
    """

    def __init__(self, search_space: StudentSearchSpace | None = None):
        self.search_space = search_space or StudentSearchSpace()

    def fit(self, pseudo: AnnotationSet, images: Mapping[int, np.ndarray]) -> StudentParams:
        if pseudo.n_annotations() == 0:
            raise FitError("cannot fit a student on an empty pseudo-label set")
        image_ids = sorted(pseudo.image_ids())
        missing = [i for i in image_ids if i not in images]
        if missing:
            raise FitError(f"missing pixel data for images {missing}")

        gts = {i: [a.box for a in pseudo.anns_for(i)] for i in image_ids}
        cache: dict[tuple[int, int, int], list] = {}
        best_params = None
        best_f1 = -1.0
        for params in self.search_space.points():
            tp = n_det = n_gt = 0
            for image_id in image_ids:
                key = (image_id, params.intensity_threshold, params.merge_distance)
                if key not in cache:
                    cache[key] = _components(
                        images[image_id], params.intensity_threshold, params.merge_distance
                    )
                dets = [
                    Detection(BBox(float(x), float(y), float(w), float(h)),
                              min(area / (w * h), 1.0))
                    for area, x, y, w, h in cache[key]
                    if params.min_area <= area <= params.max_area
                ]
                result = match(dets, gts[image_id], 0.5)
                tp += sum(1 for d in result.detections if d.matched)
                n_det += len(dets)
                n_gt += len(gts[image_id])
            f1 = 2.0 * tp / (n_det + n_gt) if (n_det + n_gt) else 0.0
            if f1 > best_f1:
                best_f1 = f1
                best_params = params
        return best_params

    def detect(self, model: Any, image: np.ndarray) -> list[Detection]:
        return student_detect(model, image)
