"""Automatic detection-prompt synthesis.

The pipeline: caption square crops around coarse detections, tally caption
words against a shape/color lexicon, keep the top-M words per attribute,
optionally widen them with synonyms, and compose "[shape][color][noun]"
phrases ready to feed a grounding detector. Every step is deterministic
given its inputs, and every word in the output carries a provenance tag.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np

from .errors import BackendError, ConfigurationError, DataFormatError
from .geometry import Detection, square_expand

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]+")

DEFAULT_M = 3
DEFAULT_CROP_CAP = 200
DEFAULT_TRIPLETS_PER_QUERY = 64

# Provenance tags
SOURCE_CAPTIONER = "captioner"
SOURCE_SYNONYM = "synonym"
SOURCE_CONFIG_NOUN = "config-noun"

# Prompt composition modes and their field order.
MODES: dict[str, tuple[str, ...]] = {
    "noun": ("noun",),
    "shape-noun": ("shape", "noun"),
    "color-noun": ("color", "noun"),
    "shape-color": ("shape", "color"),
    "full": ("shape", "color", "noun"),
}


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphabetic characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class AttributeLexicon:
    """Disjoint sets of single lowercase words naming shapes and colors."""

    shape_words: frozenset[str]
    color_words: frozenset[str]

    def __post_init__(self):
        if not self.shape_words or not self.color_words:
            raise ConfigurationError("lexicon sections must be non-empty")
        overlap = self.shape_words & self.color_words
        if overlap:
            raise ConfigurationError(f"lexicon sections overlap: {sorted(overlap)}")
        for word in self.shape_words | self.color_words:
            if word != word.lower() or not _TOKEN_RE.fullmatch(word):
                raise ConfigurationError(
                    f"lexicon entries must be single lowercase words: {word!r}"
                )

    def extended_with_synonyms(self, provider, k_per_word: int) -> "AttributeLexicon":
        """Admit single-word synonyms of existing entries into the lexicon."""
        shapes = set(self.shape_words)
        colors = set(self.color_words)
        for word in sorted(self.shape_words):
            for syn in provider.synonyms(word, k_per_word):
                syn = syn.lower()
                if _TOKEN_RE.fullmatch(syn) and syn not in colors:
                    shapes.add(syn)
        for word in sorted(self.color_words):
            for syn in provider.synonyms(word, k_per_word):
                syn = syn.lower()
                if _TOKEN_RE.fullmatch(syn) and syn not in shapes:
                    colors.add(syn)
        return AttributeLexicon(frozenset(shapes), frozenset(colors))


def parse_lexicon(text: str) -> AttributeLexicon:
    """Parse the plain-text lexicon format: '#shape' / '#color' sections."""
    section = None
    shapes: set[str] = set()
    colors: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            name = line[1:].strip().lower()
            if name not in ("shape", "color"):
                raise DataFormatError(f"line {lineno}: unknown section {line!r}")
            section = name
            continue
        if section is None:
            raise DataFormatError(f"line {lineno}: token before any section header")
        (shapes if section == "shape" else colors).add(line.lower())
    return AttributeLexicon(frozenset(shapes), frozenset(colors))


def load_lexicon(path: str | Path) -> AttributeLexicon:
    return parse_lexicon(Path(path).read_text())


def default_lexicon() -> AttributeLexicon:
    text = (
        importlib_resources.files("nucleidet.resources")
        .joinpath("lexicon.txt")
        .read_text()
    )
    return parse_lexicon(text)


@dataclass
class AttributeStats:
    """Word-frequency tallies harvested from captions."""

    shape_counts: dict[str, int] = field(default_factory=dict)
    color_counts: dict[str, int] = field(default_factory=dict)
    caption_count: int = 0


def tally_attributes(captions, lexicon: AttributeLexicon) -> AttributeStats:
    """Count lexicon words across captions; unknown words are ignored."""
    shapes: Counter[str] = Counter()
    colors: Counter[str] = Counter()
    n = 0
    for caption in captions:
        n += 1
        for token in tokenize(caption):
            if token in lexicon.shape_words:
                shapes[token] += 1
            elif token in lexicon.color_words:
                colors[token] += 1
    return AttributeStats(dict(shapes), dict(colors), n)


def _top(counts: dict[str, int], m: int) -> list[str]:
    return [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:m]]


def top_m(stats: AttributeStats, m: int) -> tuple[list[str], list[str]]:
    """Top-m words per attribute, most frequent first, ties lexicographic."""
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    return _top(stats.shape_counts, m), _top(stats.color_counts, m)


def _augment(words, provider, k_per_word: int) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for word in words:
        w = word.lower()
        if w not in seen:
            out.append(w)
            seen.add(w)
    if k_per_word <= 0:
        return out
    for word in list(out):
        try:
            extras = provider.synonyms(word, k_per_word)
        except BackendError as exc:
            log.warning("synonym provider failed for %r (%s); keeping originals", word, exc)
            continue
        for syn in extras:
            s = syn.lower()
            if s not in seen:
                out.append(s)
                seen.add(s)
    return out


def augment_synonyms(words, provider, k_per_word: int) -> list[str]:
    """Originals first, then per-word synonyms in provider order, deduplicated.

    Provider failures degrade to the original words with a logged warning;
    augmentation is an enhancement, not a requirement.
    """
    return _augment(words, provider, k_per_word)


def augment_nouns(nouns, provider, k: int) -> list[str]:
    """Same contract as augment_synonyms, exposed as an independent toggle."""
    return _augment(nouns, provider, k)


@dataclass
class PromptBundle:
    """Composed prompts plus the provenance of every field word.

    `parts` holds the structured fields of each prompt in mode order;
    `triplets` renders them as space-joined phrases. `provenance` maps each
    field word to its source tag.
    """

    parts: list[tuple[str, ...]]
    provenance: dict[str, str]
    m: int
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown prompt mode {self.mode!r}")
        seen = set()
        for part in self.parts:
            if part in seen:
                raise ConfigurationError(f"duplicate prompt {part!r} in bundle")
            seen.add(part)
            if len(part) != len(MODES[self.mode]):
                raise ConfigurationError(
                    f"prompt {part!r} does not fit mode {self.mode!r}"
                )
            for word in part:
                if word not in self.provenance:
                    raise ConfigurationError(f"word {word!r} lacks a provenance tag")

    @property
    def triplets(self) -> list[str]:
        return [" ".join(part) for part in self.parts]


def compose_prompts(
    shapes,
    colors,
    nouns,
    mode: str = "full",
    provenance: dict[str, str] | None = None,
    m: int = DEFAULT_M,
) -> PromptBundle:
    """Cartesian-product prompts in the mode's field order.

    Word lists are consumed in the given order (frequency-major from
    top_m, originals before synonyms), so the bundle order is
    deterministic. Identical phrases are deduplicated, first wins.
    """
    fields = MODES.get(mode)
    if fields is None:
        raise ConfigurationError(f"unknown prompt mode {mode!r}")
    pools = {"shape": list(shapes), "color": list(colors), "noun": list(nouns)}
    for name in fields:
        if not pools[name]:
            raise ConfigurationError(f"mode {mode!r} requires non-empty {name} words")

    if provenance is None:
        provenance = {}
        for w in pools["shape"] + pools["color"]:
            provenance.setdefault(w, SOURCE_CAPTIONER)
        for w in pools["noun"]:
            provenance.setdefault(w, SOURCE_CONFIG_NOUN)

    parts: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()

    def expand(prefix: tuple[str, ...], remaining: tuple[str, ...]):
        if not remaining:
            if prefix not in seen:
                seen.add(prefix)
                parts.append(prefix)
            return
        for word in pools[remaining[0]]:
            expand(prefix + (word,), remaining[1:])

    expand((), fields)
    used = {w for part in parts for w in part}
    return PromptBundle(
        parts=parts,
        provenance={w: provenance[w] for w in sorted(used)},
        m=m,
        mode=mode,
    )


def render_query(
    bundle: PromptBundle,
    strategy: str = "concatenated",
    max_triplets_per_query: int = DEFAULT_TRIPLETS_PER_QUERY,
) -> list[str]:
    """Turn a bundle into grounding-query strings.

    "concatenated" joins prompts with ". " into as few queries as the cap
    allows; "per-triplet" emits one query per prompt (callers merge the
    per-query detections and NMS them).
    """
    if not bundle.parts:
        raise ConfigurationError("cannot render an empty bundle")
    phrases = bundle.triplets
    if strategy == "per-triplet":
        return list(phrases)
    if strategy != "concatenated":
        raise ConfigurationError(f"unknown render strategy {strategy!r}")
    if max_triplets_per_query < 1:
        raise ConfigurationError("max_triplets_per_query must be >= 1")
    return [
        ". ".join(phrases[i : i + max_triplets_per_query])
        for i in range(0, len(phrases), max_triplets_per_query)
    ]


def harvest_captions(
    images,
    coarse_boxes,
    captioner,
    *,
    crop_cap: int = DEFAULT_CROP_CAP,
) -> list[str]:
    """Caption square crops around coarse detections.

    `images` maps image id -> HxWx3 array; `coarse_boxes` maps image id ->
    detections. The top `crop_cap` detections by score are kept (tie-broken
    deterministically), then captioned in (image id, score desc) order.
    """
    pool: list[tuple[int, Detection]] = []
    for image_id in sorted(coarse_boxes):
        for det in coarse_boxes[image_id]:
            pool.append((image_id, det))
    pool.sort(key=lambda p: (-p[1].score, p[0], p[1].box.x, p[1].box.y))
    pool = pool[:crop_cap]
    pool.sort(key=lambda p: (p[0], -p[1].score, p[1].box.x, p[1].box.y))

    captions: list[str] = []
    for image_id, det in pool:
        image = images[image_id]
        h, w = image.shape[:2]
        region = square_expand(det.box, w, h)
        x0 = max(int(np.floor(region.x)), 0)
        y0 = max(int(np.floor(region.y)), 0)
        x1 = min(int(np.ceil(region.x2)), w)
        y1 = min(int(np.ceil(region.y2)), h)
        crop = image[y0:y1, x0:x1]
        try:
            captions.append(captioner.caption(crop))
        except BackendError as exc:
            raise type(exc)(
                f"captioning failed for image {image_id}, "
                f"box {det.box.as_xywh()}: {exc}"
            ) from exc
    return captions


def forge_prompts(
    captions,
    lexicon: AttributeLexicon | None = None,
    *,
    m: int = DEFAULT_M,
    nouns=("nuclei",),
    attr_aug: bool = True,
    noun_aug: bool = False,
    synonym_provider=None,
    k_per_word: int = 5,
    mode: str = "full",
) -> PromptBundle:
    """Captions -> tallies -> top-m -> optional augmentation -> bundle.

    Attribute augmentation defaults on and noun augmentation off; widening
    the noun list with rare medical synonyms tends to hurt grounding, while
    extra attribute words are common scene vocabulary and help.
    """
    lexicon = lexicon or default_lexicon()
    stats = tally_attributes(captions, lexicon)
    shapes, colors = top_m(stats, m)

    provenance: dict[str, str] = {}
    for w in shapes + colors:
        provenance[w] = SOURCE_CAPTIONER
    nouns = [n.lower() for n in nouns]
    for n in nouns:
        provenance[n] = SOURCE_CONFIG_NOUN

    if (attr_aug or noun_aug) and synonym_provider is None:
        raise ConfigurationError("augmentation requested but no synonym provider given")
    if attr_aug:
        shapes = augment_synonyms(shapes, synonym_provider, k_per_word)
        colors = augment_synonyms(colors, synonym_provider, k_per_word)
    if noun_aug:
        nouns = augment_nouns(nouns, synonym_provider, k_per_word)
    for w in shapes + colors + nouns:
        provenance.setdefault(w, SOURCE_SYNONYM)

    return compose_prompts(shapes, colors, nouns, mode=mode, provenance=provenance, m=m)


def literal_bundle(prompt: str) -> PromptBundle:
    """Wrap a manually written prompt string as a single-entry bundle.

    The whole string becomes one noun-mode field, so rendering returns it
    verbatim; this is the pass-through for hand-authored prompts.
    """
    text = prompt.strip()
    if not text:
        raise ConfigurationError("literal prompt must be non-empty")
    return PromptBundle(
        parts=[(text,)],
        provenance={text: SOURCE_CONFIG_NOUN},
        m=0,
        mode="noun",
    )


def bundle_to_dict(bundle: PromptBundle) -> dict:
    return {
        "mode": bundle.mode,
        "m": bundle.m,
        "prompts": [list(part) for part in bundle.parts],
        "provenance": dict(sorted(bundle.provenance.items())),
    }


def bundle_from_dict(doc: dict) -> PromptBundle:
    try:
        return PromptBundle(
            parts=[tuple(p) for p in doc["prompts"]],
            provenance=dict(doc["provenance"]),
            m=int(doc["m"]),
            mode=str(doc["mode"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed prompt bundle: {exc}") from exc


def save_bundle(bundle: PromptBundle, path: str | Path) -> None:
    Path(path).write_text(json.dumps(bundle_to_dict(bundle), indent=2) + "\n")


def load_bundle(path: str | Path) -> PromptBundle:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return bundle_from_dict(doc)
