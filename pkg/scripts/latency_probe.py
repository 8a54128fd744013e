#!/usr/bin/env python3
"""Per-stage latency attribution demo with injected backend delays.

Simulates an edge/cloud split by delaying selected oracle operations, then
prints the per-stage breakdown the eval harness attributes. Handy for
checking that the trace machinery isolates slow tiers correctly.
"""

import argparse
import sys
import tempfile
from pathlib import Path

try:
    import arsent  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from arsent.config import PipelineConfig, endpoints_from_dict
from arsent.harness import emit_report, evaluate
from arsent.storage import load_manifest
from arsent.synth import SynthSpec, synthesize


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=30)
    ap.add_argument("--verdict-ms", type=float, default=50.0, help="cloud verdict delay")
    ap.add_argument("--ocr-ms", type=float, default=5.0, help="edge OCR delay")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="latency-"))
    manifest = synthesize(
        SynthSpec(seed=3, count=args.count, mix={"vim": 0.5, "none": 0.5}, image_size=(320, 240)),
        out,
    )
    pairs = load_manifest(manifest)
    locator = f"oracle:{out}?delay_verdict_ms={args.verdict_ms}&delay_ocr_ms={args.ocr_ms}"
    cfg = PipelineConfig(endpoints=endpoints_from_dict({"all": locator}))

    report = evaluate(manifest, "vim", cfg, pairs=pairs)
    sys.stdout.write(emit_report(report, "text").decode())
    print(
        f"\ninjected: verdict {args.verdict_ms} ms (cloud), ocr {args.ocr_ms} ms (edge);"
        " compare against the stage means above"
    )


if __name__ == "__main__":
    main()
