"""Visual-information-manipulation detection: OCR diff -> prompt -> verdict.

Token pairing is greedy nearest-center matching, adequate for the sparse text
found on signage; swapping to optimal assignment would be a drop-in change.
The prompt template is versioned so verdict shifts are attributable to
template changes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .backend import BackendPool, LatencyTrace
from .config import PipelineConfig
from .errors import BackendError, PipelineError
from .model import (
    Label,
    Mitigation,
    OcrToken,
    ScenePair,
    Verdict,
    VimTaxonomy,
    validate_scene_pair,
)
from .obstruction import verdict_to_dict
from .storage import token_to_dict

PROMPT_TEMPLATE_ID = "diff-prompt/v1"

# Reference frame for the pairing radius; radii scale with image diagonal.
_BASE_DIAGONAL = math.hypot(640, 480)

_IMAGE_ONLY_SENTENCE = (
    "No text differences were extracted; assess the two images directly"
    " for visual information manipulation."
)


def levenshtein(a: str, b: str) -> int:
    """Edit distance, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class Modification:
    before: OcrToken
    after: OcrToken
    edit_distance: int


@dataclass(frozen=True)
class TokenDiff:
    additions: tuple[OcrToken, ...]
    removals: tuple[OcrToken, ...]
    modifications: tuple[Modification, ...]

    @property
    def empty(self) -> bool:
        return not (self.additions or self.removals or self.modifications)

    def to_dict(self) -> dict:
        return {
            "additions": [token_to_dict(t) for t in self.additions],
            "removals": [token_to_dict(t) for t in self.removals],
            "modifications": [
                {
                    "before": token_to_dict(m.before),
                    "after": token_to_dict(m.after),
                    "edit_distance": m.edit_distance,
                }
                for m in self.modifications
            ],
        }


def diff_tokens(
    raw_tokens: Sequence[OcrToken], ar_tokens: Sequence[OcrToken], pairing_radius: float = 24.0
) -> TokenDiff:
    """Greedy minimum box-center-distance matching between the two views.

    Matched pairs with identical text are dropped; matched pairs with
    differing text become modifications; leftovers become additions (AR-only)
    or removals (raw-only). Tie-breaking on indices keeps the result
    symmetric under swapping the inputs.
    """
    if pairing_radius <= 0:
        raise ValueError(f"pairing radius must be positive, got {pairing_radius}")
    candidates = []
    for i, r in enumerate(raw_tokens):
        rc = r.box.center()
        for j, a in enumerate(ar_tokens):
            ac = a.box.center()
            dist = math.hypot(rc[0] - ac[0], rc[1] - ac[1])
            if dist <= pairing_radius:
                candidates.append((dist, i, j))
    candidates.sort()
    matched_raw: dict[int, int] = {}
    matched_ar: set[int] = set()
    for _, i, j in candidates:
        if i not in matched_raw and j not in matched_ar:
            matched_raw[i] = j
            matched_ar.add(j)
    modifications = []
    for i in sorted(matched_raw):
        before, after = raw_tokens[i], ar_tokens[matched_raw[i]]
        if before.text != after.text:
            modifications.append(Modification(before, after, levenshtein(before.text, after.text)))
    removals = tuple(t for i, t in enumerate(raw_tokens) if i not in matched_raw)
    additions = tuple(t for j, t in enumerate(ar_tokens) if j not in matched_ar)
    return TokenDiff(additions, removals, tuple(modifications))


def _at(token: OcrToken) -> str:
    cx, cy = token.box.center()
    return f"({round(cx)}, {round(cy)})"


def build_prompt(diff: TokenDiff, scene_context: Optional[str] = None) -> str:
    """Deterministic natural-language rendering of a token diff.

    Identical diffs produce byte-identical prompts; every modification's
    literal before/after strings and pixel location appear in the text.
    """
    lines = [
        "Two views of the same scene are provided: first the real-world view,"
        " then the same view with rendered virtual content."
    ]
    if scene_context:
        lines.append(f"Context: {scene_context}")
    if diff.empty:
        lines.append(_IMAGE_ONLY_SENTENCE)
    else:
        lines.append("Text differences extracted between the two views:")
        n = 0
        for m in diff.modifications:
            n += 1
            lines.append(f'{n}. modified: "{m.before.text}" -> "{m.after.text}" at {_at(m.before)}')
        for t in diff.additions:
            n += 1
            lines.append(f'{n}. added: "{t.text}" at {_at(t)}')
        for t in diff.removals:
            n += 1
            lines.append(f'{n}. removed: "{t.text}" at {_at(t)}')
    lines.append(
        "Question: does the virtual content semantically manipulate the"
        " real-world information in this scene?"
    )
    return "\n".join(lines)


def classify_taxonomy(
    diff: TokenDiff,
    truth_hint: Optional[VimTaxonomy] = None,
    default_purpose: str = "misinformation",
) -> VimTaxonomy:
    """Rule-based format classification; purpose is not inferable from pixels,
    so it comes from the hint or the configured default."""
    if truth_hint is not None:
        return truth_hint
    if diff.modifications:
        symbolic = all(
            len(m.before.text) == 1 and len(m.after.text) == 1
            and not m.before.text.isalnum() and not m.after.text.isalnum()
            for m in diff.modifications
        )
        fmt = "symbol_replacement" if symbolic else "text_alteration"
    elif diff.additions:
        fmt = "text_addition"
    elif diff.removals:
        fmt = "text_alteration"
    else:
        fmt = "misleading_graphic"
    return VimTaxonomy(format=fmt, purpose=default_purpose)


@dataclass(frozen=True)
class VimReport:
    scene_id: str
    diff: TokenDiff
    prompt: str
    template_id: str
    verdict: Verdict
    taxonomy: Optional[VimTaxonomy]
    latency: LatencyTrace

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "diff": self.diff.to_dict(),
            "prompt": self.prompt,
            "template_id": self.template_id,
            "verdict": verdict_to_dict(self.verdict),
            "taxonomy": (
                {"format": self.taxonomy.format, "purpose": self.taxonomy.purpose}
                if self.taxonomy
                else None
            ),
            "latency": self.latency.to_dict(),
        }


def scaled_radius(config: PipelineConfig, width: int, height: int) -> float:
    return config.pairing_radius_px * math.hypot(width, height) / _BASE_DIAGONAL


def detect_vim(
    pair: ScenePair, config: PipelineConfig, pool: Optional[BackendPool] = None
) -> VimReport:
    """Run the full VIM pipeline for one scene pair."""
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


def _run(pair: ScenePair, config: PipelineConfig, pool: BackendPool, trace: LatencyTrace) -> VimReport:
    raw_tokens = pool.ocr(pair.raw, trace)
    ar_tokens = pool.ocr(pair.ar, trace)
    with trace.span("local_compute", "edge"):
        radius = scaled_radius(config, pair.raw.width, pair.raw.height)
        diff = diff_tokens(raw_tokens, ar_tokens, radius)
        prompt = build_prompt(diff, config.scene_context)
    sv = pool.semantic_verdict(prompt, [pair.raw, pair.ar], trace)
    if sv.manipulated:
        verdict = Verdict(True, Label.VIM, sv.confidence, Mitigation.MAKE_TRANSLUCENT, sv.rationale)
        taxonomy = classify_taxonomy(diff, default_purpose=config.default_purpose)
    else:
        verdict = Verdict(False, Label.NONE, sv.confidence, Mitigation.NONE, sv.rationale)
        taxonomy = None
    return VimReport(pair.id, diff, prompt, PROMPT_TEMPLATE_ID, verdict, taxonomy, trace)
