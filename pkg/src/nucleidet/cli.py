"""Command-line surface: synth | forge | detect | selftrain | eval.

Values come from an optional JSON config file with CLI flags taking
precedence, so a run is fully reproducible from its logged flag set.
Exit codes: 0 success, 2 configuration error, 3 backend error, 4
data-validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .backends import (
    BlobStudent,
    OracleGrounder,
    OracleNoiseConfig,
    RemoteCaptioner,
    RemoteGrounder,
    RemoteStudent,
    RemoteSynonyms,
    StaticSynonyms,
    TemplateCaptioner,
    WireClient,
)
from .backends.base import GroundingQuery
from .data import (
    AnnotationSet,
    SyntheticSceneConfig,
    TileSpec,
    generate_synthetic_dataset,
    load_annotations,
    load_image_store,
    save_annotations,
    split_dataset,
    stitch_detections,
    tile_dataset,
    tile_image_store,
    tile_origins,
    write_dataset,
)
from .errors import (
    BackendError,
    ConfigurationError,
    DataFormatError,
    DataValidationError,
)
from .evalkit import evaluate, format_table, to_csv
from .geometry import Detection
from .prompt_forge import (
    default_lexicon,
    forge_prompts,
    harvest_captions,
    literal_bundle,
    load_bundle,
    load_lexicon,
    render_query,
    save_bundle,
)
from .selftrain import (
    SelfTrainConfig,
    filter_detections,
    run_self_training,
    write_json_atomic,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4


@dataclass
class Backends:
    grounder: object
    captioner: object
    synonyms: object
    student: object


def _resolve(args, config: dict, key: str, default=None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(key, default)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{p}: config must be a JSON object")
    return doc


def _require_seed(args, config) -> int:
    seed = _resolve(args, config, "seed")
    if seed is None:
        raise ConfigurationError("--seed is required (flag or config file)")
    return int(seed)


def _noise_config(args, config, seed: int) -> OracleNoiseConfig:
    return OracleNoiseConfig(
        drop_rate=float(_resolve(args, config, "drop-rate", 0.6)),
        jitter_px=float(_resolve(args, config, "jitter-px", 1.0)),
        fp_rate=float(_resolve(args, config, "fp-rate", 0.8)),
        score_distribution=(
            float(_resolve(args, config, "tp-score", 0.8)),
            float(_resolve(args, config, "fp-score", 0.45)),
            float(_resolve(args, config, "score-spread", 0.05)),
        ),
        seed=seed,
    )


def _resolve_backends(args, config, seed: int, scene: AnnotationSet | None, dataset_dir: Path | None) -> Backends:
    spec = str(_resolve(args, config, "backend", "builtin"))
    if spec == "builtin":
        if scene is None:
            raise ConfigurationError(
                "builtin backends simulate a detector from dataset ground truth; "
                "a dataset with annotations.json is required"
            )
        return Backends(
            grounder=OracleGrounder(scene, _noise_config(args, config, seed)),
            captioner=TemplateCaptioner(),
            synonyms=StaticSynonyms(),
            student=BlobStudent(),
        )
    if spec.startswith("remote:"):
        url = spec[len("remote:"):]
        if not url:
            raise ConfigurationError("remote backend needs a URL: --backend remote:http://host:port")
        client = WireClient(url)
        return Backends(
            grounder=RemoteGrounder(client),
            captioner=RemoteCaptioner(client),
            synonyms=RemoteSynonyms(client),
            student=RemoteStudent(client, dataset_dir or "."),
        )
    raise ConfigurationError(f"unknown backend {spec!r}; use builtin or remote:URL")


def _load_dataset(dataset_dir: str) -> tuple[AnnotationSet, dict, Path]:
    root = Path(dataset_dir)
    ann_path = root / "annotations.json"
    if not ann_path.is_file():
        raise DataValidationError(f"no annotations.json under {root}")
    aset = load_annotations(ann_path)
    return aset, load_image_store(aset, root), root


def _tile_spec(args, config) -> TileSpec | None:
    tile_size = _resolve(args, config, "tile-size")
    grid_n = _resolve(args, config, "grid-n")
    if tile_size is None and grid_n is None:
        return None
    if tile_size is None or grid_n is None:
        raise ConfigurationError("tiling requires both --tile-size and --grid-n")
    crop = _resolve(args, config, "crop-size", tile_size)
    return TileSpec(tile_size=int(tile_size), grid_n=int(grid_n), crop_size=int(crop))


def _bundle_from_args(args, config):
    bundle_path = _resolve(args, config, "bundle")
    prompt = _resolve(args, config, "prompt")
    if (bundle_path is None) == (prompt is None):
        raise ConfigurationError("provide exactly one of --bundle or --prompt")
    if prompt is not None:
        return literal_bundle(prompt)
    return load_bundle(bundle_path)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_synth(args, config) -> int:
    seed = _require_seed(args, config)
    out = _resolve(args, config, "out")
    if not out:
        raise ConfigurationError("--out is required")
    count = int(_resolve(args, config, "count", 30))
    cfg = SyntheticSceneConfig(
        image_size=int(_resolve(args, config, "image-size", 128)),
        object_count_range=(
            int(_resolve(args, config, "min-objects", 14)),
            int(_resolve(args, config, "max-objects", 22)),
        ),
        radius_range=(
            float(_resolve(args, config, "radius-min", 4.0)),
            float(_resolve(args, config, "radius-max", 9.0)),
        ),
        seed=seed,
    )
    images, aset = generate_synthetic_dataset(cfg, count)
    write_dataset(images, aset, out)
    print(f"wrote {count} images and annotations.json to {out}")
    return EXIT_OK


def _coarse_boxes(grounder, aset, images, nouns, score_threshold, max_results) -> dict[int, list[Detection]]:
    query_text = ". ".join(nouns)
    out = {}
    for rec in aset.images:
        query = GroundingQuery(
            image_id=rec.id,
            query=query_text,
            score_threshold=score_threshold,
            max_results=max_results,
            image=images.get(rec.id),
        )
        out[rec.id] = grounder.ground(query)
    return out


def cmd_forge(args, config) -> int:
    seed = _require_seed(args, config)
    out = _resolve(args, config, "out")
    if not out:
        raise ConfigurationError("--out is required")
    aset, images, root = _load_dataset(_resolve(args, config, "dataset", "."))
    backends = _resolve_backends(args, config, seed, aset, root)

    nouns = str(_resolve(args, config, "nouns", "nuclei")).split(",")
    nouns = [n.strip().lower() for n in nouns if n.strip()]
    score_threshold = float(_resolve(args, config, "score-threshold", 0.25))
    lexicon_path = _resolve(args, config, "lexicon")
    lexicon = load_lexicon(lexicon_path) if lexicon_path else default_lexicon()

    coarse = _coarse_boxes(
        backends.grounder, aset, images, nouns, score_threshold,
        int(_resolve(args, config, "max-results", 2000)),
    )
    captions = harvest_captions(
        images, coarse, backends.captioner,
        crop_cap=int(_resolve(args, config, "max-crops", 200)),
    )
    bundle = forge_prompts(
        captions,
        lexicon,
        m=int(_resolve(args, config, "m", 3)),
        nouns=nouns,
        attr_aug=bool(_resolve(args, config, "attr-aug", True)),
        noun_aug=bool(_resolve(args, config, "noun-aug", False)),
        synonym_provider=backends.synonyms,
        k_per_word=int(_resolve(args, config, "k-per-word", 5)),
        mode=str(_resolve(args, config, "mode", "full")),
    )
    save_bundle(bundle, out)
    print(f"forged {len(bundle.parts)} prompts from {len(captions)} captions -> {out}")
    for query in render_query(bundle, str(_resolve(args, config, "strategy", "concatenated"))):
        print(f"  query: {query}")
    return EXIT_OK


def cmd_detect(args, config) -> int:
    seed = _require_seed(args, config)
    out = _resolve(args, config, "out")
    if not out:
        raise ConfigurationError("--out is required")
    aset, images, root = _load_dataset(_resolve(args, config, "dataset", "."))
    bundle = _bundle_from_args(args, config)
    strategy = str(_resolve(args, config, "strategy", "concatenated"))
    score_threshold = float(_resolve(args, config, "score-threshold", 0.25))
    nms_threshold = float(_resolve(args, config, "nms-threshold", 0.5))
    max_results = int(_resolve(args, config, "max-results", 2000))
    spec = _tile_spec(args, config)
    stitch = bool(_resolve(args, config, "stitch", False))

    target = aset
    target_images = images
    if spec is not None:
        target = tile_dataset(aset, spec)
        target_images = tile_image_store(images, aset, spec)
    # the builtin oracle simulates detection on whatever frame we query in
    backends = _resolve_backends(args, config, seed, target, root)

    queries = render_query(bundle, strategy)
    predictions: dict[int, list] = {}
    from .data import Annotation

    for rec in target.images:
        merged: list[Detection] = []
        for q in queries:
            merged.extend(
                backends.grounder.ground(
                    GroundingQuery(
                        image_id=rec.id,
                        query=q,
                        score_threshold=score_threshold,
                        max_results=max_results,
                        image=target_images.get(rec.id),
                    )
                )
            )
        kept = filter_detections(merged, score_threshold, nms_threshold)
        if kept:
            predictions[rec.id] = [Annotation(d.box, 1, d.score) for d in kept]

    if spec is not None and stitch:
        stitched: dict[int, list] = {}
        n_tiles = spec.grid_n * spec.grid_n
        for rec in aset.images:
            origins = tile_origins(rec.width, rec.height, spec)
            per_tile = {}
            for k in range(n_tiles):
                pid = rec.id * n_tiles + k
                per_tile[k] = [
                    Detection(a.box, a.score if a.score is not None else 1.0)
                    for a in predictions.get(pid, [])
                ]
            dets = stitch_detections(per_tile, origins, nms_threshold)
            if dets:
                stitched[rec.id] = [Annotation(d.box, 1, d.score) for d in dets]
        result = aset.bare().with_annotations(stitched)
    else:
        result = target.bare().with_annotations(predictions)

    save_annotations(result, out)
    print(f"wrote {result.n_annotations()} detections over {len(result.images)} images -> {out}")
    return EXIT_OK


def cmd_selftrain(args, config) -> int:
    seed = _require_seed(args, config)
    out = _resolve(args, config, "out")
    if not out:
        raise ConfigurationError("--out is required")
    run_dir = Path(out)
    if run_dir.exists() and any(run_dir.iterdir()) and not bool(_resolve(args, config, "force", False)):
        raise ConfigurationError(f"run directory {run_dir} is not empty; pass --force to reuse")

    aset, images, root = _load_dataset(_resolve(args, config, "dataset", "."))
    bundle = _bundle_from_args(args, config)
    strategy = str(_resolve(args, config, "strategy", "concatenated"))

    n = len(aset.images)
    train_n = int(_resolve(args, config, "train-n", max(1, round(n * 16 / 30))))
    test_n = int(_resolve(args, config, "test-n", n - train_n))
    val_n = int(_resolve(args, config, "val-n", min(4, train_n)))
    split = split_dataset(aset, train_n, test_n, val_n, seed)

    cfg = SelfTrainConfig(
        max_rounds=int(_resolve(args, config, "max-rounds", 5)),
        score_threshold=float(_resolve(args, config, "score-threshold", 0.25)),
        nms_threshold=float(_resolve(args, config, "nms-threshold", 0.5)),
        stability_epsilon=float(_resolve(args, config, "stability-epsilon", 0.02)),
        patience=int(_resolve(args, config, "patience", 2)),
        seed=seed,
        label_merge=str(_resolve(args, config, "label-merge", "replace")),
    )

    train_universe = split.train.bare()
    train_images = {i: images[i] for i in train_universe.image_ids()}
    test_images = {i: images[i] for i in split.test.image_ids()}

    spec = _tile_spec(args, config)
    test_gt = split.test
    world = aset
    if spec is not None:
        train_ref = split.train
        train_universe = tile_dataset(train_ref, spec).bare()
        train_images = tile_image_store(train_images, train_ref.bare(), spec)
        test_gt = tile_dataset(split.test, spec)
        test_images = tile_image_store(test_images, split.test.bare(), spec)
        world = tile_dataset(aset, spec)
    # the builtin oracle simulates detection in the frame we query in
    backends = _resolve_backends(args, config, seed, world, root)

    run_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "seed": seed,
        "backend": str(_resolve(args, config, "backend", "builtin")),
        "strategy": strategy,
        "train_n": train_n,
        "test_n": test_n,
        "val_n": val_n,
        "max_rounds": cfg.max_rounds,
        "score_threshold": cfg.score_threshold,
        "nms_threshold": cfg.nms_threshold,
        "stability_epsilon": cfg.stability_epsilon,
        "patience": cfg.patience,
        "prompts": bundle.triplets,
    }
    write_json_atomic(run_dir / "run_config.json", resolved)

    result = run_self_training(
        backends.grounder,
        train_universe,
        train_images,
        cfg,
        student=backends.student,
        prompts=bundle,
        strategy=strategy,
        test_gt=test_gt,
        test_images=test_images,
        run_dir=run_dir,
    )

    print(f"{'round':>5} {'stability':>9} {'AP50':>7} {'P@50':>7} {'R@50':>7}")
    for report in result.rounds:
        m = report.metrics_vs_gt
        print(
            f"{report.round_index:>5} {report.stability_vs_previous:>9.3f} "
            + (f"{m.ap50:>7.3f} {m.precision50:>7.3f} {m.recall50:>7.3f}" if m else f"{'-':>7} {'-':>7} {'-':>7}")
        )
    print(f"best round: {result.best_round} (converged: {result.converged})")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    pred_path = _resolve(args, config, "pred")
    gt_path = _resolve(args, config, "gt")
    if not pred_path or not gt_path:
        raise ConfigurationError("--pred and --gt are required")
    pred = load_annotations(pred_path)
    gt = load_annotations(gt_path)
    result = evaluate(pred, gt, max_dets=int(_resolve(args, config, "max-dets", 1000)))
    print(format_table(result))
    csv_path = _resolve(args, config, "emit-csv")
    if csv_path:
        Path(csv_path).write_text(to_csv(result))
        print(f"csv report -> {csv_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_shared(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed (mandatory for non-eval commands)")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--backend", help="builtin | remote:URL (default builtin)")
    p.add_argument("--score-threshold", type=float, help="detection score gate (default 0.25)")
    p.add_argument("--nms-threshold", type=float, help="NMS IoU threshold (default 0.5)")


def _add_noise(p: argparse.ArgumentParser):
    p.add_argument("--drop-rate", type=float, help="builtin oracle: GT drop probability (default 0.6)")
    p.add_argument("--jitter-px", type=float, help="builtin oracle: coordinate jitter (default 1.0)")
    p.add_argument("--fp-rate", type=float, help="builtin oracle: false positives per image (default 0.8)")
    p.add_argument("--tp-score", type=float, help="builtin oracle: mean TP score (default 0.8)")
    p.add_argument("--fp-score", type=float, help="builtin oracle: mean FP score (default 0.45)")
    p.add_argument("--score-spread", type=float, help="builtin oracle: score stddev (default 0.05)")


def _add_tiling(p: argparse.ArgumentParser):
    p.add_argument("--tile-size", type=int, help="patch side; enables patch-space pipeline")
    p.add_argument("--grid-n", type=int, help="tiles per axis")
    p.add_argument("--crop-size", type=int, help="random-crop side inside tiles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nucleidet",
        description="Zero-shot nuclei detection: prompt forging, grounding, self-training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    _add_shared(p)
    p.add_argument("--count", type=int, help="number of images (default 30)")
    p.add_argument("--image-size", type=int, help="image side in pixels (default 128)")
    p.add_argument("--min-objects", type=int, help="min objects per image (default 14)")
    p.add_argument("--max-objects", type=int, help="max objects per image (default 22)")
    p.add_argument("--radius-min", type=float, help="min semi-axis (default 4)")
    p.add_argument("--radius-max", type=float, help="max semi-axis (default 9)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("forge", help="synthesize detection prompts from captions")
    _add_shared(p)
    _add_noise(p)
    p.add_argument("--dataset", help="dataset directory (annotations.json + images)")
    p.add_argument("--nouns", help="comma-separated target nouns (default nuclei)")
    p.add_argument("--m", type=int, help="top words per attribute (default 3)")
    p.add_argument("--attr-aug", action=argparse.BooleanOptionalAction, default=None,
                   help="augment attribute words with synonyms (default on)")
    p.add_argument("--noun-aug", action=argparse.BooleanOptionalAction, default=None,
                   help="augment nouns with synonyms (default off)")
    p.add_argument("--mode", choices=["noun", "shape-noun", "color-noun", "shape-color", "full"],
                   help="prompt composition mode (default full)")
    p.add_argument("--strategy", choices=["concatenated", "per-triplet"],
                   help="query rendering strategy (default concatenated)")
    p.add_argument("--lexicon", help="path to a custom shape/color lexicon")
    p.add_argument("--max-crops", type=int, help="caption crop cap (default 200)")
    p.add_argument("--max-results", type=int, help="grounding results cap (default 2000)")
    p.add_argument("--k-per-word", type=int, help="synonyms per word (default 5)")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("detect", help="run grounding detection with a prompt bundle")
    _add_shared(p)
    _add_noise(p)
    _add_tiling(p)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--bundle", help="prompt bundle file from forge")
    p.add_argument("--prompt", help="literal prompt string (manual design pass-through)")
    p.add_argument("--strategy", choices=["concatenated", "per-triplet"])
    p.add_argument("--max-results", type=int, help="grounding results cap (default 2000)")
    p.add_argument("--stitch", action="store_true", default=None,
                   help="with tiling: re-project patch detections and cross-NMS")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("selftrain", help="iterative teacher->student pseudo-label refinement")
    _add_shared(p)
    _add_noise(p)
    _add_tiling(p)
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--bundle", help="prompt bundle file from forge")
    p.add_argument("--prompt", help="literal prompt string (manual design pass-through)")
    p.add_argument("--strategy", choices=["concatenated", "per-triplet"])
    p.add_argument("--max-rounds", type=int, help="student rounds after bootstrap (default 5)")
    p.add_argument("--patience", type=int, help="stable rounds before stopping (default 2)")
    p.add_argument("--stability-epsilon", type=float, help="stability slack (default 0.02)")
    p.add_argument("--label-merge", choices=["replace", "union"],
                   help="replace labels each round or union with the teacher's (experimental)")
    p.add_argument("--train-n", type=int, help="training image count (default 16:14 ratio)")
    p.add_argument("--test-n", type=int, help="test image count")
    p.add_argument("--val-n", type=int, help="validation images flagged inside train (default 4)")
    p.add_argument("--force", action="store_true", default=None,
                   help="allow writing into a non-empty run directory")
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("eval", help="COCO-style evaluation of predictions vs ground truth")
    _add_shared(p)
    p.add_argument("--pred", help="predictions COCO file")
    p.add_argument("--gt", help="ground-truth COCO file")
    p.add_argument("--max-dets", type=int, help="per-image detection cap (default 1000)")
    p.add_argument("--emit-csv", help="also write the flat CSV report here")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataFormatError, DataValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
