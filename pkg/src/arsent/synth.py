"""Deterministic generator of labeled raw/AR scene pairs.

Each scene renders 1-3 "signs" (solid panels with block-glyph text) on a flat
background. The AR view adds geometric virtual content whose exact pixel
footprint becomes the content mask:

  none         content placed disjoint from every sign
  obstruction  a panel covering >= cover_min of one sign's mask
  vim          sign text altered under the content (character substitution,
               arrow flip, or text addition)

All randomness flows from per-scene generators seeded with seed XOR scene
index, so output is byte-identical across runs regardless of scheduling.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import glyphs
from .maskops import RasterMask, intersection_area, obstruction_ratio
from .model import (
    BoundingBox,
    DEFAULT_VIM_PURPOSES,
    GroundTruth,
    ImageRef,
    KeyObject,
    Label,
    OcrToken,
    ScenePair,
)
from .storage import image_ref_from_array, write_manifest, write_scene

BACKGROUNDS = ((235, 233, 228), (210, 214, 220), (188, 192, 186), (222, 210, 196))
PANEL_COLORS = ((200, 30, 30), (30, 120, 200), (30, 160, 60), (230, 180, 40), (120, 60, 160))
CONTENT_COLORS = ((255, 0, 255), (0, 255, 255), (255, 128, 0), (128, 0, 255))
TEXT_COLOR = (18, 18, 18)

SIGN_TEXTS = (
    "STOP",
    "EXIT",
    "DANGER",
    "NO ENTRY",
    "KEEP OUT",
    "WET FLOOR",
    "EMERGENCY →",
    "FIRE EXIT",
    "ER →",
    "CAUTION",
    "ONE WAY →",
    "CLOSED",
    "← DETOUR",
)
ADDITION_TEXTS = ("FREE WIFI", "SALE NOW", "← TURN", "VISIT US")

# Lookalike table for character alteration attacks; arrows are handled by the
# dedicated flip mechanic, not substitution.
CONFUSABLE = {k: v for k, v in glyphs.CONFUSABLE.items() if k not in ("→", "←")}


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters; mix maps label name to probability."""

    seed: int = 0
    count: int = 10
    mix: dict = field(default_factory=lambda: {"none": 0.4, "obstruction": 0.3, "vim": 0.3})
    image_size: tuple[int, int] = (640, 480)
    glyph_set: frozenset = glyphs.GLYPH_SET
    cover_min: float = 0.6

    def validate(self) -> None:
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if not self.mix:
            raise ValueError("mix must not be empty")
        for name, p in self.mix.items():
            Label(name)
            if p < 0:
                raise ValueError(f"mix probability for {name} is negative")
        total = sum(self.mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mix probabilities sum to {total}, expected 1")
        w, h = self.image_size
        if w < 160 or h < 120:
            raise ValueError(f"image size {w}x{h} too small to place signs")
        if not (0.0 < self.cover_min <= 1.0):
            raise ValueError(f"cover_min must be in (0, 1], got {self.cover_min}")


@dataclass(frozen=True)
class _Sign:
    text: str
    panel: BoundingBox
    tokens: tuple[tuple[str, BoundingBox], ...]
    color: tuple
    scale: int


def render_sign(text: str, origin: tuple[int, int], scale: int, glyph_set=glyphs.GLYPH_SET):
    """Panel pixels plus exact per-token boxes for a sign at `origin`.

    Returns (panel_box, pixels, tokens) where pixels is the (h, w, 3) panel
    array and tokens are absolute-coordinate boxes recorded for OCR oracles.
    """
    if not text.strip():
        raise ValueError("empty text")
    bad = sorted({c for c in text if c != " " and c not in glyph_set})
    if bad:
        raise ValueError(f"unsupported glyphs: {', '.join(repr(c) for c in bad)}")
    pad = 2 * scale
    x0, y0 = origin
    tokens = glyphs.layout_tokens(text, (x0 + pad, y0 + pad), scale)
    last = tokens[-1][1]
    panel_w = (last.x + last.w - x0) + pad
    panel_h = glyphs.token_height(scale) + 2 * pad
    panel = np.zeros((panel_h, panel_w, 3), dtype=np.uint8)
    return BoundingBox(x0, y0, panel_w, panel_h, 1.0), panel, tokens


def _paint_sign(canvas: np.ndarray, sign: _Sign) -> None:
    b = sign.panel
    canvas[b.y : b.y + b.h, b.x : b.x + b.w] = sign.color
    for token, box in sign.tokens:
        glyphs.draw_token(canvas, token, box, sign.scale, TEXT_COLOR)


def _find_spot(rng, width, height, w, h, occupied, margin=10, tries=80):
    for _ in range(tries):
        if width - w - 16 <= 8 or height - h - 16 <= 8:
            return None
        x = rng.randrange(8, width - w - 8)
        y = rng.randrange(8, height - h - 8)
        if all(
            x + w + margin <= ox or ox + ow + margin <= x
            or y + h + margin <= oy or oy + oh + margin <= y
            for (ox, oy, ow, oh) in occupied
        ):
            return x, y
    return None


def _object_name(text: str, used: set) -> str:
    words = [t.lower() for t in text.split() if any(c.isalpha() for c in t)]
    base = (" ".join(words) + " sign").strip()
    name, n = base, 1
    while name in used:
        n += 1
        name = f"{base} {n}"
    used.add(name)
    return name


def _raster_sorted(tokens: list[OcrToken]) -> tuple[OcrToken, ...]:
    return tuple(sorted(tokens, key=lambda t: (t.box.y, t.box.x)))


def _token_visible(box: BoundingBox, content: RasterMask) -> bool:
    cell = RasterMask.from_rect(content.width, content.height, box.x, box.y, box.w, box.h)
    covered = intersection_area(cell, content)
    return covered <= 0.5 * (box.w * box.h)


def generate_pair(spec: SynthSpec, index: int) -> ScenePair:
    """One deterministic scene pair; independent of all other indices."""
    rng = random.Random(spec.seed ^ index)
    width, height = spec.image_size
    label = Label(rng.choices(list(spec.mix), weights=list(spec.mix.values()))[0])

    canvas = np.empty((height, width, 3), dtype=np.uint8)
    canvas[:] = rng.choice(BACKGROUNDS)

    signs: list[_Sign] = []
    occupied: list[tuple] = []
    texts = rng.sample(SIGN_TEXTS, k=rng.randint(1, 3))
    for text in texts:
        scale = rng.choice((2, 3))
        probe_box, _, _ = render_sign(text, (0, 0), scale, spec.glyph_set)
        spot = _find_spot(rng, width, height, probe_box.w, probe_box.h, occupied)
        if spot is None:
            continue
        panel, _, tokens = render_sign(text, spot, scale, spec.glyph_set)
        signs.append(_Sign(text, panel, tuple(tokens), rng.choice(PANEL_COLORS), scale))
        occupied.append((panel.x, panel.y, panel.w, panel.h))
    if not signs:
        raise RuntimeError(f"scene {index}: could not place any sign")

    for sign in signs:
        _paint_sign(canvas, sign)
    raw = canvas
    ar = raw.copy()
    content = RasterMask.empty(width, height)

    used_names: set = set()
    key_objects = tuple(
        KeyObject(
            name=_object_name(s.text, used_names),
            box=s.panel,
            mask=RasterMask.from_rect(width, height, s.panel.x, s.panel.y, s.panel.w, s.panel.h),
        )
        for s in signs
    )
    raw_tokens = [OcrToken(tok, box, 1.0) for s in signs for tok, box in s.tokens]

    vim_format = vim_purpose = text_before = text_after = None
    ar_tokens = list(raw_tokens)

    if label == Label.NONE:
        content = _place_benign_content(rng, ar, occupied)
    elif label == Label.OBSTRUCTION:
        target = rng.choice(signs)
        content = _cover_sign(rng, ar, target, spec.cover_min)
        ar_tokens = [t for t in ar_tokens if _token_visible(t.box, content)]
    else:
        content, ar_tokens, vim_format, text_before, text_after = _apply_vim(
            rng, ar, signs, occupied, ar_tokens
        )
        vim_purpose = rng.choice(DEFAULT_VIM_PURPOSES)
        key_objects = ()  # key-object annotation belongs to the obstruction corpus

    truth = GroundTruth(
        label=label,
        key_objects=key_objects,
        vim_format=vim_format,
        vim_purpose=vim_purpose,
        text_before=text_before,
        text_after=text_after,
        ocr_raw=_raster_sorted(raw_tokens),
        ocr_ar=_raster_sorted(ar_tokens),
    )
    scene_id = f"s{index:05d}"
    return ScenePair(
        id=scene_id,
        raw=image_ref_from_array(f"{scene_id}/raw", raw),
        ar=image_ref_from_array(f"{scene_id}/ar", ar),
        content_mask=content,
        truth=truth,
    )


def _place_benign_content(rng, ar: np.ndarray, occupied) -> RasterMask:
    """1-2 virtual primitives fully disjoint from every sign panel."""
    height, width = ar.shape[:2]
    mask = RasterMask.empty(width, height)
    taken = list(occupied)
    for _ in range(rng.randint(1, 2)):
        color = rng.choice(CONTENT_COLORS)
        if rng.random() < 0.5:
            w, h = rng.randint(40, 140), rng.randint(30, 90)
            spot = _find_spot(rng, width, height, w, h, taken, margin=4)
            if spot is None:
                continue
            x, y = spot
            ar[y : y + h, x : x + w] = color
            mask = mask.union(RasterMask.from_rect(width, height, x, y, w, h))
            taken.append((x, y, w, h))
        else:
            scale = rng.randint(6, 10)
            bits = glyphs.glyph_array(rng.choice(("→", "←")), scale)
            gh, gw = bits.shape
            spot = _find_spot(rng, width, height, gw, gh, taken, margin=4)
            if spot is None:
                continue
            x, y = spot
            ys, xs = np.nonzero(bits)
            ar[y + ys, x + xs] = color
            painted = np.zeros((height, width), dtype=bool)
            painted[y + ys, x + xs] = True
            mask = mask.union(RasterMask.from_array(painted))
            taken.append((x, y, gw, gh))
    return mask


def _cover_sign(rng, ar: np.ndarray, sign: _Sign, cover_min: float) -> RasterMask:
    """Opaque panel over >= cover_min of the target sign's mask."""
    height, width = ar.shape[:2]
    frac = rng.uniform(min(cover_min + 0.05, 0.95), 1.0)
    b = sign.panel
    w = min(math.ceil(frac * b.w), b.w)
    x = b.x if rng.random() < 0.5 else b.x + b.w - w
    ar[b.y : b.y + b.h, x : x + w] = rng.choice(CONTENT_COLORS)
    return RasterMask.from_rect(width, height, x, b.y, w, b.h)


def _substitute(rng, token: str) -> str:
    candidates = [i for i, c in enumerate(token) if c in CONFUSABLE]
    if candidates:
        i = rng.choice(candidates)
        return token[:i] + CONFUSABLE[token[i]] + token[i + 1 :]
    repl = "X" if token[0] != "X" else "K"
    return repl + token[1:]


def _apply_vim(rng, ar: np.ndarray, signs, occupied, ar_tokens):
    """Alter sign text under new virtual content; returns the content mask,
    the AR-view token list, and the recorded before/after strings."""
    height, width = ar.shape[:2]
    target = rng.choice(signs)
    arrow_idxs = [i for i, (tok, _) in enumerate(target.tokens) if tok in ("→", "←")]
    mechanics = ["substitution", "addition"] + (["arrow_flip"] if arrow_idxs else [])
    mechanic = rng.choice(mechanics)

    if mechanic == "addition":
        text = rng.choice(ADDITION_TEXTS)
        scale = rng.choice((2, 3))
        probe, _, _ = render_sign(text, (0, 0), scale)
        spot = _find_spot(rng, width, height, probe.w, probe.h, occupied, margin=4)
        if spot is None:
            mechanic = "substitution"  # fall back when the canvas is crowded
        else:
            panel, _, tokens = render_sign(text, spot, scale)
            color = rng.choice(CONTENT_COLORS)
            ar[panel.y : panel.y + panel.h, panel.x : panel.x + panel.w] = color
            for tok, box in tokens:
                glyphs.draw_token(ar, tok, box, scale, TEXT_COLOR)
            mask = RasterMask.from_rect(width, height, panel.x, panel.y, panel.w, panel.h)
            ar_tokens = ar_tokens + [OcrToken(tok, box, 1.0) for tok, box in tokens]
            return mask, ar_tokens, "text_addition", None, text

    if mechanic == "arrow_flip":
        idx = rng.choice(arrow_idxs)
        before, box = target.tokens[idx]
        after = "←" if before == "→" else "→"
        fmt = "symbol_replacement"
    else:
        texty = [i for i, (tok, _) in enumerate(target.tokens) if tok not in ("→", "←")]
        idx = rng.choice(texty) if texty else 0
        before, box = target.tokens[idx]
        after = _substitute(rng, before)
        fmt = "text_alteration"

    ar[box.y : box.y + box.h, box.x : box.x + box.w] = target.color
    glyphs.draw_token(ar, after, box, target.scale, TEXT_COLOR)
    mask = RasterMask.from_rect(width, height, box.x, box.y, box.w, box.h)
    ar_tokens = [
        OcrToken(after, t.box, 1.0) if (t.text == before and t.box == box) else t
        for t in ar_tokens
    ]
    return mask, ar_tokens, fmt, before, after


def synthesize(spec: SynthSpec, out_dir) -> Path:
    """Emit spec.count scene pairs plus a manifest; returns the manifest path.

    Obstruction scenes are verified against the exact mask arithmetic before
    being written; a violation is a bug, not a data condition.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for index in range(spec.count):
        pair = generate_pair(spec, index)
        _self_check(pair, spec)
        records.append(write_scene(pair, out))
    manifest = out / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest


def _self_check(pair: ScenePair, spec: SynthSpec) -> None:
    truth = pair.truth
    if truth.label == Label.OBSTRUCTION:
        best = max(obstruction_ratio(o.mask, pair.content_mask) for o in truth.key_objects)
        if best < spec.cover_min:
            raise RuntimeError(f"scene {pair.id}: obstruction cover {best:.3f} < {spec.cover_min}")
    elif truth.label == Label.NONE:
        for obj in truth.key_objects:
            if intersection_area(obj.mask, pair.content_mask) != 0:
                raise RuntimeError(f"scene {pair.id}: benign content touches {obj.name}")
