"""Deterministic oracle backends that answer from ground-truth sidecars.

An oracle indexes a synthesized dataset directory and resolves incoming
images by content hash, so it works identically whether it is called
in-process or behind an HTTP hop that re-encoded the image. Noise (dropped
objects, box jitter, OCR character errors, verdict flips) is injected at
this boundary only, from RNGs derived per (seed, operation, scene), so
perturbations are bit-identical across runs and any scheduling order.

Locator scheme:
    oracle:<dataset-dir>?seed=7&verdict_flip_prob=0.1&delay_verdict_ms=50
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from urllib.parse import parse_qsl

from .backend import Backend, SemanticVerdict
from .errors import ConfigError, ProtocolError
from .glyphs import CONFUSABLE
from .maskops import RasterMask, intersection_area
from .model import BoundingBox, GroundTruth, ImageRef, KeyObject, Label, OcrToken
from .storage import load_rgb_array, load_truth, rgb_of


@dataclass(frozen=True)
class NoiseProfile:
    """Seeded perturbation parameters; all-zero means the perfect backend."""

    seed: int = 0
    drop_object_prob: float = 0.0
    box_jitter_px: int = 0
    char_error_rate: float = 0.0
    verdict_flip_prob: float = 0.0

    def validate(self) -> None:
        for name in ("drop_object_prob", "char_error_rate", "verdict_flip_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"noise {name} must be in [0,1], got {v}")
        if self.box_jitter_px < 0:
            raise ConfigError("box_jitter_px must be non-negative")


_NOISE_FIELDS = {
    "seed": int,
    "drop_object_prob": float,
    "box_jitter_px": int,
    "char_error_rate": float,
    "verdict_flip_prob": float,
}


def parse_locator(locator: str) -> tuple[Path, NoiseProfile, dict]:
    """Split an oracle locator into dataset root, noise profile, and delays."""
    if not locator.startswith("oracle:"):
        raise ConfigError(f"not an oracle locator: {locator}")
    rest = locator[len("oracle:") :]
    path_part, _, query = rest.partition("?")
    noise_kwargs = {}
    delays = {}
    for key, value in parse_qsl(query, keep_blank_values=True):
        if key in _NOISE_FIELDS:
            noise_kwargs[key] = _NOISE_FIELDS[key](value)
        elif key.startswith("delay_") and key.endswith("_ms"):
            delays[key[len("delay_") : -len("_ms")]] = float(value)
        else:
            raise ConfigError(f"unknown oracle parameter: {key}")
    noise = NoiseProfile(**noise_kwargs)
    noise.validate()
    return Path(path_part), noise, delays


class OracleBackend(Backend):
    """Answers every backend operation from a dataset's sidecars."""

    pool_enforces_timeout = True

    def __init__(self, root: Path, noise: NoiseProfile = NoiseProfile(), delays: dict = None):
        noise.validate()
        self.root = Path(root)
        self.noise = noise
        self.delays = dict(delays or {})
        self._lock = threading.Lock()
        self.noise_events: list[dict] = []
        self._truths: dict[str, GroundTruth] = {}
        self._by_digest: dict[str, tuple[str, str]] = {}
        self._by_path: dict[str, tuple[str, str]] = {}
        self._build_index()

    @classmethod
    def from_locator(cls, locator: str) -> "OracleBackend":
        root, noise, delays = parse_locator(locator)
        return cls(root, noise, delays)

    # ---- index -----------------------------------------------------------

    def _build_index(self) -> None:
        scene_dirs = self._scene_dirs()
        if not scene_dirs:
            raise ConfigError(f"oracle: no scenes found under {self.root}")
        for scene_id, scene_dir in scene_dirs:
            self._truths[scene_id] = load_truth(scene_dir / "truth.json")
            for view in ("raw", "ar"):
                png = scene_dir / f"{view}.png"
                digest = hashlib.sha256(load_rgb_array(png).tobytes()).hexdigest()
                self._by_digest[digest] = (scene_id, view)
                self._by_path[str(png.resolve())] = (scene_id, view)

    def _scene_dirs(self) -> list[tuple[str, Path]]:
        manifest = self.root / "manifest.jsonl"
        if manifest.exists():
            out = []
            for line in manifest.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    out.append((rec["id"], (self.root / rec["truth"]).parent))
            return out
        scenes = self.root / "scenes"
        if scenes.is_dir():
            return sorted((d.name, d) for d in scenes.iterdir() if (d / "truth.json").exists())
        return []

    def _lookup(self, image: ImageRef) -> tuple[str, str]:
        if image.path:
            hit = self._by_path.get(str(Path(image.path).resolve()))
            if hit is not None:
                return hit
        digest = hashlib.sha256(rgb_of(image).tobytes()).hexdigest()
        hit = self._by_digest.get(digest)
        if hit is None:
            raise ProtocolError(
                f"oracle: image {image.id!r} does not match any indexed scene under {self.root}"
            )
        return hit

    # ---- noise plumbing ---------------------------------------------------

    def _rng(self, *parts: str) -> random.Random:
        key = f"{self.noise.seed}|" + "|".join(parts)
        return random.Random(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big"))

    def _log(self, op: str, scene: str, event: str, detail: str = "") -> None:
        with self._lock:
            self.noise_events.append({"op": op, "scene": scene, "event": event, "detail": detail})

    def _maybe_delay(self, kind: str) -> None:
        ms = self.delays.get(kind, 0)
        if ms:
            time.sleep(ms / 1000.0)

    # ---- operations --------------------------------------------------------

    def call_keyobjects(self, image: ImageRef) -> list[str]:
        self._maybe_delay("keyobjects")
        scene, _ = self._lookup(image)
        names = [o.name for o in self._truths[scene].key_objects]
        if self.noise.drop_object_prob > 0:
            rng = self._rng("keyobjects", scene)
            kept = []
            for name in names:
                if rng.random() < self.noise.drop_object_prob:
                    self._log("keyobjects", scene, "drop", name)
                else:
                    kept.append(name)
            names = kept
        return names

    def call_detect(self, image: ImageRef, query: str) -> list[BoundingBox]:
        self._maybe_delay("detect")
        scene, _ = self._lookup(image)
        obj = next((o for o in self._truths[scene].key_objects if o.name == query), None)
        if obj is None:
            return []
        box = obj.box
        if self.noise.box_jitter_px > 0:
            box = self._jitter(box, image, scene, query)
        return [box]

    def _jitter(self, box: BoundingBox, image: ImageRef, scene: str, query: str) -> BoundingBox:
        j = self.noise.box_jitter_px
        rng = self._rng("detect", scene, query)
        x0 = box.x + rng.randint(-j, j)
        y0 = box.y + rng.randint(-j, j)
        x1 = box.x + box.w + rng.randint(-j, j)
        y1 = box.y + box.h + rng.randint(-j, j)
        x0 = min(max(x0, 0), image.width - 1)
        y0 = min(max(y0, 0), image.height - 1)
        x1 = min(max(x1, x0 + 1), image.width)
        y1 = min(max(y1, y0 + 1), image.height)
        self._log("detect", scene, "jitter", query)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, box.score)

    def call_segment(self, image: ImageRef, boxes: Sequence[BoundingBox]) -> list[RasterMask]:
        self._maybe_delay("segment")
        scene, _ = self._lookup(image)
        objects = self._truths[scene].key_objects
        out = []
        for box in boxes:
            rect = RasterMask.from_rect(image.width, image.height, box.x, box.y, box.w, box.h)
            best: Optional[KeyObject] = None
            best_overlap = 0
            for obj in objects:
                overlap = intersection_area(obj.mask, rect)
                if overlap > best_overlap:
                    best, best_overlap = obj, overlap
            out.append(best.mask.intersect(rect) if best else RasterMask.empty(image.width, image.height))
        return out

    def call_ocr(self, image: ImageRef) -> list[OcrToken]:
        self._maybe_delay("ocr")
        scene, view = self._lookup(image)
        truth = self._truths[scene]
        tokens = truth.ocr_raw if view == "raw" else truth.ocr_ar
        if self.noise.char_error_rate > 0:
            rng = self._rng("ocr", scene, view)
            tokens = tuple(self._corrupt(t, rng, scene) for t in tokens)
        return list(tokens)

    def _corrupt(self, token: OcrToken, rng: random.Random, scene: str) -> OcrToken:
        chars = list(token.text)
        changed = False
        for i, ch in enumerate(chars):
            if rng.random() < self.noise.char_error_rate and ch in CONFUSABLE:
                chars[i] = CONFUSABLE[ch]
                changed = True
        if not changed:
            return token
        text = "".join(chars)
        self._log("ocr", scene, "char_error", f"{token.text} -> {text}")
        return OcrToken(text, token.box, token.confidence)

    def call_verdict(self, prompt: str, images: Sequence[ImageRef]) -> SemanticVerdict:
        self._maybe_delay("verdict")
        scene, _ = self._lookup(images[0])
        label = self._truths[scene].label
        manipulated = label == Label.VIM
        if self.noise.verdict_flip_prob > 0:
            rng = self._rng("verdict", scene)
            if rng.random() < self.noise.verdict_flip_prob:
                manipulated = not manipulated
                self._log("verdict", scene, "flip", f"label={label.value}")
        return SemanticVerdict(manipulated, 1.0, f"oracle: scene label is {label.value}")

    # ---- test hooks --------------------------------------------------------

    def events(self, op: Optional[str] = None, since: int = 0) -> list[dict]:
        with self._lock:
            ev = self.noise_events[since:]
        return [e for e in ev if op is None or e["op"] == op]

    def event_count(self) -> int:
        with self._lock:
            return len(self.noise_events)
