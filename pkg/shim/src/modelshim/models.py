"""Real-model backends: zero-shot grounding and captioning checkpoints.

Checkpoints load eagerly at construction so a bad configuration aborts
startup instead of failing mid-traffic. Grounding uses a transformers
zero-shot object-detection checkpoint (GroundingDINO family by default);
captioning uses a BLIP checkpoint. Synonyms come from the embedded table
unless a caller swaps in another source; /v1/train and /v1/detect are
served by the classical student so the protocol stays fully functional
without a trainable neural detector.

Decoding parameters (beam size, max length) follow library defaults and
are exposed via config only where the pipeline needs them.
"""

from __future__ import annotations

import logging
import threading

import numpy as np
from PIL import Image

from .config import ShimConfig
from .errors import ShimError
from .imaging import decode_image_field
from .student import ModelRegistry, fit
from .student import detect as student_detect
from .stub import _SYNONYMS

log = logging.getLogger(__name__)


class RealBackends:
    """Checkpoint-backed capabilities; one device, serialized inference."""

    def __init__(self, cfg: ShimConfig):
        try:
            import torch
            from transformers import (
                AutoModelForZeroShotObjectDetection,
                AutoProcessor,
                BlipForConditionalGeneration,
                BlipProcessor,
            )
        except ImportError as exc:
            raise RuntimeError(
                "real-model mode needs the 'models' extra (torch + transformers); "
                "use --stub for a weight-free server"
            ) from exc

        self._torch = torch
        self._device = cfg.device
        self._max_batch = cfg.max_batch_size
        # one lock per device: GPU inference is serialized, queued callers wait
        self._infer_lock = threading.Lock()
        self._registry = ModelRegistry()

        log.info("loading grounding checkpoint %s", cfg.grounding_checkpoint)
        self._ground_processor = AutoProcessor.from_pretrained(cfg.grounding_checkpoint)
        self._ground_model = AutoModelForZeroShotObjectDetection.from_pretrained(
            cfg.grounding_checkpoint
        ).to(cfg.device).eval()

        log.info("loading captioner checkpoint %s", cfg.captioner_checkpoint)
        self._caption_processor = BlipProcessor.from_pretrained(cfg.captioner_checkpoint)
        self._caption_model = BlipForConditionalGeneration.from_pretrained(
            cfg.captioner_checkpoint
        ).to(cfg.device).eval()

    def ground(self, image_field: str, query: str, score_threshold: float, max_results: int) -> list[dict]:
        image = Image.fromarray(decode_image_field(image_field))
        # grounding models want lowercase phrases terminated by periods
        text = query.lower()
        if not text.endswith("."):
            text += "."
        with self._infer_lock, self._torch.no_grad():
            inputs = self._ground_processor(
                images=image, text=text, return_tensors="pt"
            ).to(self._device)
            outputs = self._ground_model(**inputs)
            results = self._ground_processor.post_process_grounded_object_detection(
                outputs,
                inputs.input_ids,
                threshold=score_threshold,
                text_threshold=score_threshold,
                target_sizes=[image.size[::-1]],
            )[0]
        dets = []
        labels = results.get("text_labels", results.get("labels", []))
        for box, score, phrase in zip(results["boxes"], results["scores"], labels):
            x0, y0, x1, y1 = (float(v) for v in box)
            if x1 <= x0 or y1 <= y0:
                continue
            dets.append(
                {
                    "bbox": [x0, y0, x1 - x0, y1 - y0],
                    "score": min(max(float(score), 0.0), 1.0),
                    "phrase": str(phrase),
                }
            )
        dets.sort(key=lambda d: -d["score"])
        return dets[:max_results]

    def caption(self, image_field: str) -> str:
        image = Image.fromarray(decode_image_field(image_field))
        with self._infer_lock, self._torch.no_grad():
            inputs = self._caption_processor(images=image, return_tensors="pt").to(self._device)
            ids = self._caption_model.generate(**inputs)
            text = self._caption_processor.decode(ids[0], skip_special_tokens=True)
        text = text.strip()
        if not text:
            raise ShimError(500, "empty-caption", "captioner produced no text")
        return text

    def synonyms(self, word: str, k: int) -> list[str]:
        word = word.lower()
        out = [s for s in _SYNONYMS.get(word, []) if s != word]
        return out[:k]

    def train(self, annotations: dict, image_root: str) -> str:
        model = fit(annotations, image_root)
        return self._registry.register(model, annotations)

    def detect(self, model_id: str, image_field: str) -> list[dict]:
        model = self._registry.get(model_id)
        image = decode_image_field(image_field)
        return student_detect(model, np.asarray(image))
