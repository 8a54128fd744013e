"""Obstruction detection: key objects -> boxes -> masks -> overlap -> verdict.

Scene aggregation is OR over per-object flags: any critical object covered
past the threshold marks the scene attacked, which is the safety-conservative
reading. Verdict confidence reflects the margin between the worst cover ratio
and the threshold (0.5 at the boundary, 1.0 at the extremes).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .backend import BackendPool, LatencyTrace
from .config import PipelineConfig
from .errors import BackendError, PipelineError
from .maskops import ObstructionMeasure, RasterMask, measure
from .model import (
    BoundingBox,
    KeyObject,
    Label,
    Mitigation,
    ScenePair,
    Verdict,
    validate_scene_pair,
)


@dataclass(frozen=True)
class MeasuredObject:
    """One key object's outcome; measure is None when it could not be scored."""

    name: str
    box: Optional[BoundingBox]
    measure: Optional[ObstructionMeasure]
    invalid_reason: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"name": self.name}
        d["box"] = (
            {"x": self.box.x, "y": self.box.y, "w": self.box.w, "h": self.box.h, "score": self.box.score}
            if self.box
            else None
        )
        if self.measure:
            m = self.measure
            d["measure"] = {
                "key_area": m.key_area,
                "overlap_area": m.overlap_area,
                "ratio": m.ratio,
                "flagged": m.flagged,
            }
        else:
            d["measure"] = None
            d["invalid_reason"] = self.invalid_reason
        return d


@dataclass(frozen=True)
class ObstructionReport:
    scene_id: str
    per_object: tuple[MeasuredObject, ...]
    verdict: Verdict
    latency: LatencyTrace

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "per_object": [o.to_dict() for o in self.per_object],
            "verdict": verdict_to_dict(self.verdict),
            "latency": self.latency.to_dict(),
        }


def verdict_to_dict(v: Verdict) -> dict:
    return {
        "attacked": v.attacked,
        "kind": v.kind.value,
        "confidence": v.confidence,
        "mitigation": v.mitigation.value,
        "rationale": v.rationale,
    }


def detections_to_measures(
    objects: Sequence[KeyObject], content: RasterMask, threshold: float
) -> list[MeasuredObject]:
    """Pure measurement step: one entry per object, in input order.

    An empty object mask yields an invalid entry instead of aborting; invalid
    entries are excluded from verdict aggregation.
    """
    out = []
    for obj in objects:
        try:
            out.append(MeasuredObject(obj.name, obj.box, measure(obj.mask, content, threshold)))
        except ValueError as exc:
            out.append(MeasuredObject(obj.name, obj.box, None, invalid_reason=str(exc)))
    return out


def _aggregate_verdict(measured: Sequence[MeasuredObject], threshold: float) -> Verdict:
    valid = [m.measure for m in measured if m.measure is not None]
    if not valid:
        reason = "no key objects identified" if not measured else "no measurable key objects"
        return Verdict(False, Label.NONE, 1.0, Mitigation.NONE, reason)
    worst = max(valid, key=lambda m: m.ratio)
    flagged = [m for m in valid if m.flagged]
    if flagged:
        conf = 1.0 if threshold >= 1.0 else 0.5 + 0.5 * (worst.ratio - threshold) / (1.0 - threshold)
        rationale = (
            f"{len(flagged)} of {len(valid)} key objects obstructed;"
            f" max cover ratio {worst.ratio:.4f} >= threshold {threshold}"
        )
        return Verdict(True, Label.OBSTRUCTION, min(conf, 1.0), Mitigation.MAKE_TRANSLUCENT, rationale)
    conf = 0.5 + 0.5 * (threshold - worst.ratio) / threshold
    rationale = f"max cover ratio {worst.ratio:.4f} below threshold {threshold}"
    return Verdict(False, Label.NONE, min(conf, 1.0), Mitigation.NONE, rationale)


def detect_obstruction(
    pair: ScenePair, config: PipelineConfig, pool: Optional[BackendPool] = None
) -> ObstructionReport:
    """Run the full obstruction pipeline for one scene pair.

    Backend failures surface as PipelineError tagged with the failing stage;
    the caller chooses fail-open or fail-closed handling.
    """
    violations = validate_scene_pair(pair)
    if violations:
        raise ValueError(f"invalid scene pair {pair.id}: " + "; ".join(violations))
    config.validate()
    pool = pool or BackendPool(config.endpoints)
    trace = LatencyTrace()
    start = time.monotonic_ns()
    try:
        report = _run(pair, config, pool, trace)
    except BackendError as exc:
        trace.wall_ns = time.monotonic_ns() - start
        raise PipelineError(getattr(exc, "stage", "unknown"), exc) from exc
    trace.wall_ns = time.monotonic_ns() - start
    return report


def _run(pair: ScenePair, config: PipelineConfig, pool: BackendPool, trace: LatencyTrace) -> ObstructionReport:
    names = pool.identify_key_objects(pair.raw, trace)[: config.max_key_objects]
    if not names:
        verdict = Verdict(False, Label.NONE, 1.0, Mitigation.NONE, "no key objects identified")
        return ObstructionReport(pair.id, (), verdict, trace)

    located: list[tuple[str, Optional[BoundingBox]]] = []
    for name in names:
        boxes = [b for b in pool.detect(pair.raw, name, trace) if b.score >= config.min_detection_score]
        located.append((name, boxes[0] if boxes else None))

    found = [(n, b) for n, b in located if b is not None]
    masks = pool.segment(pair.raw, [b for _, b in found], trace)
    objects = {n: KeyObject(n, b, m) for (n, b), m in zip(found, masks)}

    with trace.span("local_compute", "edge"):
        measured_by_name = {
            m.name: m
            for m in detections_to_measures(list(objects.values()), pair.content_mask, config.threshold)
        }
        per_object = tuple(
            measured_by_name[name]
            if name in measured_by_name
            else MeasuredObject(name, None, None, invalid_reason="no detection above threshold")
            for name, _ in located
        )
        verdict = _aggregate_verdict(per_object, config.threshold)
    return ObstructionReport(pair.id, per_object, verdict, trace)
