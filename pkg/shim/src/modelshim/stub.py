"""Canned deterministic backends: full protocol coverage, no model weights."""

from __future__ import annotations

import numpy as np

from .imaging import decode_image_field

_SYNONYMS = {
    "round": ["oval", "elliptical", "circular", "rounded", "spherical"],
    "circle": ["ring", "disc", "loop", "cycle"],
    "oblong": ["oval", "rectangular", "oblate"],
    "blue": ["azure", "aqua", "cyan", "turquoise"],
    "black": ["ebony", "coal", "jet", "onyx"],
    "purple": ["magenta", "lilac", "violet"],
    "nuclei": ["nucleus", "cyteblast", "karyon"],
}


class StubBackends:
    """Schema-faithful canned responses, a pure function of the request."""

    def ground(self, image_field: str, query: str, score_threshold: float, max_results: int) -> list[dict]:
        image = decode_image_field(image_field)
        h, w = image.shape[:2]
        # three nested boxes spanning the frame, descending confidence
        canned = [
            ([0.125 * w, 0.125 * h, 0.25 * w, 0.25 * h], 0.9),
            ([0.5 * w, 0.25 * h, 0.25 * w, 0.25 * h], 0.7),
            ([0.25 * w, 0.55 * h, 0.3 * w, 0.3 * h], 0.5),
        ]
        dets = [
            {"bbox": [float(v) for v in bbox], "score": score, "phrase": query}
            for bbox, score in canned
            if score >= score_threshold
        ]
        return dets[:max_results]

    def caption(self, image_field: str) -> str:
        image = decode_image_field(image_field)
        return "a round purple object" if image.size else "a plain background"

    def synonyms(self, word: str, k: int) -> list[str]:
        word = word.lower()
        out = [s for s in _SYNONYMS.get(word, []) if s != word]
        return out[:k]

    def train(self, annotations: dict, image_root: str) -> str:
        n = len(annotations.get("annotations", [])) if isinstance(annotations, dict) else 0
        return f"stub-student-{n:04d}"

    def detect(self, model_id: str, image_field: str) -> list[dict]:
        image = decode_image_field(image_field)
        h, w = image.shape[:2]
        return [
            {"bbox": [0.25 * w, 0.25 * h, 0.2 * w, 0.2 * h], "score": 0.8, "phrase": ""},
            {"bbox": [0.6 * w, 0.6 * h, 0.2 * w, 0.2 * h], "score": 0.6, "phrase": ""},
        ]
