#!/usr/bin/env python3
"""Sweep the obstruction flag threshold over a synthetic corpus.

Prints flagged-scene counts and accuracy per threshold; the flagged count is
non-increasing by construction, which makes this a quick sanity check when
touching mask math.
"""

import argparse
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

try:
    import arsent  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from arsent.config import PipelineConfig, endpoints_from_dict
from arsent.harness import evaluate
from arsent.storage import load_manifest
from arsent.synth import SynthSpec, synthesize


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=60)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--obstruction-share", type=float, default=0.5)
    ap.add_argument("--out", type=Path, default=None, help="dataset dir (default: temp)")
    args = ap.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="sweep-"))
    share = args.obstruction_share
    mix = {"obstruction": share, "none": round(1.0 - share, 9)}
    manifest = synthesize(SynthSpec(seed=args.seed, count=args.count, mix=mix), out)
    pairs = load_manifest(manifest)
    base = PipelineConfig(endpoints=endpoints_from_dict({"all": f"oracle:{out}"}))

    print(f"dataset: {out} ({args.count} scenes, obstruction share {share})")
    print(f"{'tau':>5} {'flagged':>8} {'tp':>4} {'fp':>4} {'fn':>4} {'accuracy':>9}")
    for k in range(1, 11):
        tau = round(0.1 * k, 1)
        report = evaluate(manifest, "obstruction", replace(base, threshold=tau), pairs=pairs)
        acc = "n/a" if report.accuracy is None else f"{report.accuracy * 100:.2f}%"
        print(
            f"{tau:>5} {report.tp + report.fp:>8} {report.tp:>4} {report.fp:>4}"
            f" {report.fn:>4} {acc:>9}"
        )


if __name__ == "__main__":
    main()
