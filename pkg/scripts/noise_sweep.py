#!/usr/bin/env python3
"""Measure detection accuracy as backend noise rises.

Sweeps key-object drop probability against the obstruction pipeline and
verdict flip probability against the VIM pipeline, using the same seeded
oracle machinery the test suite uses. Useful for eyeballing how each
pipeline degrades before wiring in real models.
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
from arsent.harness import evaluate
from arsent.storage import load_manifest
from arsent.synth import SynthSpec, synthesize


def config_for(root: Path, **noise) -> PipelineConfig:
    locator = f"oracle:{root}"
    if noise:
        locator += "?" + "&".join(f"{k}={v}" for k, v in sorted(noise.items()))
    return PipelineConfig(endpoints=endpoints_from_dict({"all": locator}))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=120)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--noise-seed", type=int, default=9)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="noise-"))
    mix = {"none": 0.4, "obstruction": 0.3, "vim": 0.3}
    manifest = synthesize(
        SynthSpec(seed=args.seed, count=args.count, mix=mix, image_size=(320, 240)), out
    )
    pairs = load_manifest(manifest)
    levels = [0.0, 0.05, 0.1, 0.2, 0.4]

    print(f"dataset: {out} ({args.count} scenes)")
    print("\nobstruction pipeline vs key-object drop probability")
    print(f"{'drop_p':>7} {'accuracy':>9} {'recall':>8} {'failed':>7}")
    for p in levels:
        cfg = config_for(out, seed=args.noise_seed, drop_object_prob=p)
        r = evaluate(manifest, "obstruction", cfg, pairs=pairs)
        rec = "n/a" if r.recall is None else f"{r.recall * 100:.1f}%"
        print(f"{p:>7} {r.accuracy * 100:>8.2f}% {rec:>8} {len(r.failed):>7}")

    print("\nvim pipeline vs verdict flip probability")
    print(f"{'flip_p':>7} {'accuracy':>9} {'precision':>10} {'recall':>8}")
    for p in levels:
        cfg = config_for(out, seed=args.noise_seed, verdict_flip_prob=p)
        r = evaluate(manifest, "vim", cfg, pairs=pairs)
        prec = "n/a" if r.precision is None else f"{r.precision * 100:.1f}%"
        rec = "n/a" if r.recall is None else f"{r.recall * 100:.1f}%"
        print(f"{p:>7} {r.accuracy * 100:>8.2f}% {prec:>10} {rec:>8}")


if __name__ == "__main__":
    main()
