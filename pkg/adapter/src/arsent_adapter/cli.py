"""Command line for the adapter service."""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, AdapterConfig
from .engines import EngineStartupError
from .server import serve_adapter


def parse_engines(specs: list[str]) -> dict:
    """--engine classical  or  --engine ocr=tesseract --engine verdict=openai"""
    engines = {k: "classical" for k in KINDS}
    for spec in specs:
        if "=" in spec:
            kind, _, name = spec.partition("=")
            if kind not in KINDS:
                raise ValueError(f"unknown operation kind {kind!r}")
            engines[kind] = name
        else:
            engines = {k: spec for k in KINDS}
    return engines


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="arsent-adapter",
        description="Serve the arsent backend wire protocol over real or classical engines.",
    )
    ap.add_argument("--listen", default="127.0.0.1:8900")
    ap.add_argument(
        "--engine",
        action="append",
        default=[],
        metavar="[KIND=]NAME",
        help="engine selection; bare NAME applies to every kind",
    )
    ap.add_argument("--pool-size", type=int, default=2)
    ap.add_argument("--record", metavar="DIR", help="capture request/response pairs to DIR")
    ap.add_argument("--replay", metavar="DIR", help="serve recorded responses from DIR")
    ap.add_argument("--vlm-base-url", default="https://api.openai.com/v1")
    ap.add_argument("--vlm-model", default="gpt-4o")
    args = ap.parse_args(argv)

    try:
        config = AdapterConfig(
            listen=args.listen,
            engines=parse_engines(args.engine),
            pool_size=args.pool_size,
            record_dir=args.record,
            replay_dir=args.replay,
            vlm_base_url=args.vlm_base_url,
            vlm_model=args.vlm_model,
        )
        print(f"listening on {config.listen}", file=sys.stderr)
        serve_adapter(config)
    except (EngineStartupError, ValueError, OSError) as exc:
        print(f"startup failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
