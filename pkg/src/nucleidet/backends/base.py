"""Capability contracts for the pluggable model boundary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Protocol, runtime_checkable

import numpy as np

from ..data import AnnotationSet
from ..errors import ConfigurationError
from ..geometry import Detection


@dataclass(frozen=True)
class GroundingQuery:
    """One grounding request: which image, what to look for, how to filter.

    Builtin backends resolve the image by `image_id`; remote backends need
    pixel data (`image`) or a server-visible `image_path`.
    """

    image_id: int
    query: str
    score_threshold: float
    max_results: int
    image: np.ndarray | None = None
    image_path: str | None = None

    def __post_init__(self):
        if not self.query.strip():
            raise ConfigurationError("grounding query must be non-empty")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigurationError("score_threshold must lie in [0, 1]")
        if self.max_results < 1:
            raise ConfigurationError("max_results must be >= 1")


@runtime_checkable
class GroundingBackend(Protocol):
    def ground(self, query: GroundingQuery) -> list[Detection]: ...


@runtime_checkable
class CaptionBackend(Protocol):
    def caption(self, crop: np.ndarray) -> str: ...


@runtime_checkable
class SynonymBackend(Protocol):
    def synonyms(self, word: str, k: int) -> list[str]: ...


@runtime_checkable
class StudentBackend(Protocol):
    """A trainable detector: fit on pseudo-labels, then detect.

    `fit` returns an opaque model handle that `detect` consumes; builtin
    students hand back their parameter set, remote ones a model id.
    """

    def fit(self, pseudo: AnnotationSet, images: Mapping[int, np.ndarray]) -> Any: ...

    def detect(self, model: Any, image: np.ndarray) -> list[Detection]: ...
