"""Shim configuration."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_GROUNDING = "IDEA-Research/grounding-dino-tiny"
DEFAULT_CAPTIONER = "Salesforce/blip-image-captioning-base"


@dataclass(frozen=True)
class ShimConfig:
    """Server settings; checkpoints are only touched outside stub mode."""

    grounding_checkpoint: str = DEFAULT_GROUNDING
    captioner_checkpoint: str = DEFAULT_CAPTIONER
    device: str = "cpu"
    max_batch_size: int = 8
    host: str = "127.0.0.1"
    port: int = 8080
    queue_size: int = 16
    stub: bool = False

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if self.queue_size < 1:
            raise ValueError("queue_size must be >= 1")
        if not (0 <= self.port <= 65535):
            raise ValueError("port out of range")
