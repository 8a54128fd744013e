"""Manifest evaluation: confusion counts, metrics, and latency attribution.

Failed scenes land in a separate bucket instead of the confusion matrix, so
infrastructure faults never masquerade as model error. The report body
(counts, metrics, per-label breakdown, fingerprint) is deterministic for
fixed inputs and seeds; latency statistics and the creation timestamp are
wall-clock measurements and live outside that deterministic body.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .backend import BackendPool, LatencyTrace
from .config import PipelineConfig, config_fingerprint
from .errors import PipelineError
from .model import Label, ScenePair
from .obstruction import detect_obstruction
from .storage import load_manifest
from .vim import detect_vim

PIPELINES = ("obstruction", "vim")


@dataclass(frozen=True)
class StageLatency:
    count: int
    mean_ns: float
    p95_ns: int

    def to_dict(self) -> dict:
        return {"count": self.count, "mean_ns": self.mean_ns, "p95_ns": self.p95_ns}


@dataclass(frozen=True)
class EvalReport:
    pipeline: str
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    per_label: dict
    failed: tuple
    per_stage_latency: dict
    fingerprint: str
    created_at: str

    def body_dict(self) -> dict:
        """The deterministic portion: everything except timing."""
        return {
            "schema": "eval-report/v1",
            "pipeline": self.pipeline,
            "n": self.n,
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "per_label": self.per_label,
            "failed": [list(f) for f in self.failed],
            "fingerprint": self.fingerprint,
        }

    def to_dict(self) -> dict:
        d = self.body_dict()
        d["per_stage_latency"] = {k: v.to_dict() for k, v in sorted(self.per_stage_latency.items())}
        d["created_at"] = self.created_at
        return d


def nearest_rank_p95(values: list[int]) -> int:
    """p95 by the nearest-rank rule: deterministic across platforms."""
    ordered = sorted(values)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[max(rank, 1) - 1]


def confusion(outcomes) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) from (predicted, actual) boolean pairs."""
    tp = fp = tn = fn = 0
    for predicted, actual in outcomes:
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def _stage_stats(traces: list[LatencyTrace]) -> dict[str, StageLatency]:
    by_stage: dict[str, list[int]] = {}
    for trace in traces:
        for span in trace.spans:
            by_stage.setdefault(span.stage, []).append(span.elapsed_ns)
    return {
        stage: StageLatency(len(vals), sum(vals) / len(vals), nearest_rank_p95(vals))
        for stage, vals in by_stage.items()
    }


def evaluate(
    manifest: Path,
    pipeline: str,
    config: PipelineConfig,
    parallelism: int = 1,
    pairs: Optional[list[ScenePair]] = None,
) -> EvalReport:
    """Run one pipeline over every manifest scene and score against truth.

    A prediction is positive iff the verdict is attacked with the kind
    matching the pipeline; a scene's truth is positive iff its label matches
    the pipeline. Scene order does not affect the counts.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"pipeline must be one of {PIPELINES}, got {pipeline}")
    config.validate()
    if pairs is None:
        pairs = load_manifest(manifest)
    missing = [p.id for p in pairs if p.truth is None]
    if missing:
        raise ValueError(f"scenes without ground truth cannot be evaluated: {missing[:5]}")

    pool = BackendPool(config.endpoints)
    run = detect_obstruction if pipeline == "obstruction" else detect_vim
    positive_label = Label.OBSTRUCTION if pipeline == "obstruction" else Label.VIM

    def score(pair: ScenePair):
        try:
            report = run(pair, config, pool)
        except PipelineError as exc:
            return pair, None, exc
        return pair, report, None

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
            results = list(pool_exec.map(score, pairs))
    else:
        results = [score(p) for p in pairs]

    failed = []
    traces = []
    outcomes = []
    per_label: dict[str, dict] = {}
    for pair, report, error in results:
        label = pair.truth.label
        stats = per_label.setdefault(
            label.value, {"n": 0, "predicted_positive": 0, "correct": 0, "failed": 0}
        )
        if error is not None:
            failed.append((pair.id, error.stage))
            stats["failed"] += 1
            continue
        stats["n"] += 1
        traces.append(report.latency)
        predicted = report.verdict.attacked and report.verdict.kind == positive_label
        actual = label == positive_label
        outcomes.append((predicted, actual))
        if predicted:
            stats["predicted_positive"] += 1
        if predicted == actual:
            stats["correct"] += 1

    tp, fp, tn, fn = confusion(outcomes)
    n = tp + fp + tn + fn
    return EvalReport(
        pipeline=pipeline,
        n=n,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=(tp + tn) / n if n else None,
        precision=tp / (tp + fp) if (tp + fp) else None,
        recall=tp / (tp + fn) if (tp + fn) else None,
        per_label={k: per_label[k] for k in sorted(per_label)},
        failed=tuple(sorted(failed)),
        per_stage_latency=_stage_stats(traces),
        fingerprint=f"{pipeline}:{config_fingerprint(config)}",
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def report_from_dict(data: dict) -> EvalReport:
    counts = data["counts"]
    return EvalReport(
        pipeline=data["pipeline"],
        n=data["n"],
        tp=counts["tp"],
        fp=counts["fp"],
        tn=counts["tn"],
        fn=counts["fn"],
        accuracy=data["accuracy"],
        precision=data["precision"],
        recall=data["recall"],
        per_label=data["per_label"],
        failed=tuple(tuple(f) for f in data["failed"]),
        per_stage_latency={
            k: StageLatency(v["count"], v["mean_ns"], v["p95_ns"])
            for k, v in data.get("per_stage_latency", {}).items()
        },
        fingerprint=data["fingerprint"],
        created_at=data.get("created_at", ""),
    )


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.2f}%"


def emit_report(report: EvalReport, format: str = "text") -> bytes:
    """Render a report; json is schema-stable, text is a fixed-layout table."""
    if format == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n").encode()
    if format != "text":
        raise ValueError(f"format must be json or text, got {format}")
    lines = [
        "== evaluation report ==",
        f"pipeline:    {report.pipeline}",
        f"scenes:      {report.n}   failed: {len(report.failed)}",
        f"counts:      tp={report.tp} fp={report.fp} tn={report.tn} fn={report.fn}",
        f"accuracy:    {_pct(report.accuracy)}",
        f"precision:   {_pct(report.precision)}",
        f"recall:      {_pct(report.recall)}",
        "per-label:",
    ]
    for label, stats in report.per_label.items():
        lines.append(
            f"  {label:<12} n={stats['n']:<5} positive={stats['predicted_positive']:<5}"
            f" correct={stats['correct']:<5} failed={stats['failed']}"
        )
    lines.append("latency (per stage):")
    lines.append(f"  {'stage':<14}{'calls':>7}{'mean ms':>12}{'p95 ms':>12}")
    for stage, s in sorted(report.per_stage_latency.items()):
        lines.append(
            f"  {stage:<14}{s.count:>7}{s.mean_ns / 1e6:>12.3f}{s.p95_ns / 1e6:>12.3f}"
        )
    lines.append(f"config fingerprint: {report.fingerprint}")
    if report.created_at:
        lines.append(f"created: {report.created_at}")
    return ("\n".join(lines) + "\n").encode()


__all__ = [
    "EvalReport",
    "StageLatency",
    "PIPELINES",
    "evaluate",
    "emit_report",
    "load_manifest",
    "nearest_rank_p95",
    "report_from_dict",
]
