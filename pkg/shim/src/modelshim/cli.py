"""Command line: `modelshim serve [--stub] [--host] [--port] ...`."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import DEFAULT_CAPTIONER, DEFAULT_GROUNDING, ShimConfig
from .service import create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelshim",
        description="Model server for the nuclei-detection wire protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="start the HTTP server")
    p.add_argument("--stub", action="store_true",
                   help="serve canned deterministic responses (no model weights)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--grounding-checkpoint", default=DEFAULT_GROUNDING)
    p.add_argument("--captioner-checkpoint", default=DEFAULT_CAPTIONER)
    p.add_argument("--device", default="cpu", help="cpu or cuda[:N]")
    p.add_argument("--max-batch", type=int, default=8)
    p.add_argument("--queue-size", type=int, default=16)
    return parser


def make_app(cfg: ShimConfig):
    if cfg.stub:
        from .stub import StubBackends

        backends = StubBackends()
    else:
        from .models import RealBackends

        backends = RealBackends(cfg)
    return create_app(backends, queue_size=cfg.queue_size)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    cfg = ShimConfig(
        grounding_checkpoint=args.grounding_checkpoint,
        captioner_checkpoint=args.captioner_checkpoint,
        device=args.device,
        max_batch_size=args.max_batch,
        host=args.host,
        port=args.port,
        queue_size=args.queue_size,
        stub=args.stub,
    )
    try:
        app = make_app(cfg)
    except RuntimeError as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
