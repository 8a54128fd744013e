"""Inference engines behind the wire protocol.

Three tiers:

  classical   pixel analysis only (always available): solid-color region
              panels, template-matched block-glyph OCR, and a text-comparison
              verdict. Real image processing at desk scale, no ML runtime.
  tesseract   OCR via a locally installed tesseract binary.
  openai      key-object naming and semantic verdicts via a hosted
              OpenAI-compatible vision endpoint.

Engines are instantiated per serving slot and called serially per instance;
heavyweight engines must not assume reentrancy.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .font5x7 import FONT, GLYPH_H
from .imaging import background_color, rle_encode_mask


class EngineStartupError(RuntimeError):
    """Engine cannot be constructed (missing dependency or credential)."""


# Every engine answers a subset of the protocol operations on decoded inputs:
#   keyobjects(img) -> [str]
#   detect(img, query) -> [ (x, y, w, h, score) ]
#   segment(img, boxes) -> [ rle_str ]
#   ocr(img) -> [ {"text", "box": {...}, "confidence"} ]
#   verdict(prompt, images) -> {"manipulated", "confidence", "rationale"}


@dataclass(frozen=True)
class _Panel:
    x: int
    y: int
    w: int
    h: int
    fill: float


_DARK_MAX = 60  # all channels below this reads as glyph ink
_MIN_REGION_PX = 400
_MIN_PANEL_FILL = 0.45


def _tight(bitmap: np.ndarray) -> bytes:
    cols = np.nonzero(bitmap.any(axis=0))[0]
    return bitmap[:, cols[0] : cols[-1] + 1].tobytes()


_TEMPLATES = {}
for _ch, _rows in FONT.items():
    _arr = np.array([[c == "X" for c in row] for row in _rows], dtype=bool)
    _TEMPLATES[_tight(_arr)] = _ch


class ClassicalEngine:
    """Pixel-analysis implementation of all five operations."""

    kinds = ("keyobjects", "detect", "segment", "ocr", "verdict")
    name = "classical"

    def __init__(self, config=None):
        pass

    # ---- panels ----------------------------------------------------------

    def _panels(self, img: np.ndarray) -> list[_Panel]:
        bg = background_color(img)
        colors, counts = np.unique(img.reshape(-1, 3), axis=0, return_counts=True)
        panels = []
        for color, count in zip(colors, counts):
            if tuple(int(c) for c in color) == bg or count < _MIN_REGION_PX:
                continue
            if (color < _DARK_MAX).all():
                continue  # glyph ink, not a surface
            where = (img == color).all(axis=-1)
            labels, _ = ndimage.label(where, structure=np.ones((3, 3), dtype=int))
            # distinct surfaces may share a color; split into components
            for slice_y, slice_x in ndimage.find_objects(labels):
                w = slice_x.stop - slice_x.start
                h = slice_y.stop - slice_y.start
                region_px = int(where[slice_y, slice_x].sum())
                fill = region_px / (w * h)
                if region_px >= _MIN_REGION_PX and fill >= _MIN_PANEL_FILL and w >= 10 and h >= 10:
                    panels.append(_Panel(slice_x.start, slice_y.start, w, h, fill))
        panels.sort(key=lambda p: (p.y, p.x))
        return panels

    def keyobjects(self, img: np.ndarray) -> list[str]:
        return [f"panel {i + 1}" for i in range(len(self._panels(img)))]

    def detect(self, img: np.ndarray, query: str) -> list[dict]:
        panels = self._panels(img)
        match = re.fullmatch(r"panel (\d+)", query.strip())
        if not match:
            return []
        idx = int(match.group(1)) - 1
        if not 0 <= idx < len(panels):
            return []
        p = panels[idx]
        return [{"x": p.x, "y": p.y, "w": p.w, "h": p.h, "score": round(min(p.fill, 0.99), 4)}]

    def segment(self, img: np.ndarray, boxes: list[dict]) -> list[str]:
        bg = np.array(background_color(img), dtype=np.uint8)
        not_bg = (img != bg).any(axis=-1)
        out = []
        for b in boxes:
            mask = np.zeros(img.shape[:2], dtype=bool)
            x0, y0 = max(b["x"], 0), max(b["y"], 0)
            x1 = min(b["x"] + b["w"], img.shape[1])
            y1 = min(b["y"] + b["h"], img.shape[0])
            mask[y0:y1, x0:x1] = not_bg[y0:y1, x0:x1]
            out.append(rle_encode_mask(mask))
        return out

    # ---- OCR -------------------------------------------------------------

    def ocr(self, img: np.ndarray) -> list[dict]:
        ink = (img < _DARK_MAX).all(axis=-1)
        labels, n = ndimage.label(ink, structure=np.ones((3, 3), dtype=int))
        glyphs = []
        for slice_y, slice_x in ndimage.find_objects(labels):
            h = slice_y.stop - slice_y.start
            w = slice_x.stop - slice_x.start
            scale = round(h / GLYPH_H)
            if scale < 1 or abs(h - GLYPH_H * scale) > 1:
                continue
            bitmap = self._downsample(ink[slice_y, slice_x], scale)
            if bitmap is None:
                continue
            ch = _TEMPLATES.get(_tight(bitmap), "?")
            glyphs.append(
                {"ch": ch, "x": slice_x.start, "y": slice_y.start, "w": w, "h": h, "s": scale}
            )
        return self._group_tokens(glyphs)

    @staticmethod
    def _downsample(patch: np.ndarray, scale: int) -> np.ndarray | None:
        h, w = patch.shape
        gh, gw = round(h / scale), round(w / scale)
        if gh != GLYPH_H or gw < 1 or gw > 5:
            return None
        padded = np.zeros((gh * scale, gw * scale), dtype=bool)
        padded[:h, :w] = patch[: gh * scale, : gw * scale]
        blocks = padded.reshape(gh, scale, gw, scale).mean(axis=(1, 3))
        return blocks > 0.5

    @staticmethod
    def _group_tokens(glyphs: list[dict]) -> list[dict]:
        tokens = []
        used = [False] * len(glyphs)
        order = sorted(range(len(glyphs)), key=lambda i: (glyphs[i]["y"], glyphs[i]["x"]))
        for i in order:
            if used[i]:
                continue
            run = [glyphs[i]]
            used[i] = True
            while True:
                tail = run[-1]
                gap_limit = 2.5 * tail["s"]
                nxt = None
                for j in order:
                    if used[j]:
                        continue
                    g = glyphs[j]
                    same_row = abs(g["y"] - tail["y"]) <= tail["s"]
                    gap = g["x"] - (tail["x"] + tail["w"])
                    if same_row and 0 <= gap <= gap_limit:
                        if nxt is None or g["x"] < glyphs[nxt]["x"]:
                            nxt = j
                if nxt is None:
                    break
                used[nxt] = True
                run.append(glyphs[nxt])
            text = "".join(g["ch"] for g in run)
            known = sum(1 for g in run if g["ch"] != "?")
            x0 = min(g["x"] for g in run)
            y0 = min(g["y"] for g in run)
            x1 = max(g["x"] + g["w"] for g in run)
            y1 = max(g["y"] + g["h"] for g in run)
            tokens.append(
                {
                    "text": text,
                    "box": {"x": x0, "y": y0, "w": x1 - x0, "h": y1 - y0, "score": 1.0},
                    "confidence": round(known / len(run), 4),
                }
            )
        tokens.sort(key=lambda t: (t["box"]["y"], t["box"]["x"]))
        return tokens

    # ---- verdict ---------------------------------------------------------

    def verdict(self, prompt: str, images: list[np.ndarray]) -> dict:
        """Text-comparison heuristic: the scene counts as manipulated when the
        two views disagree on extracted text. The prompt is available but not
        trusted; this engine re-reads the pixels."""
        if len(images) < 2:
            return {
                "manipulated": False,
                "confidence": 0.25,
                "rationale": "single image: no reference view to compare against",
            }
        texts = [sorted(t["text"] for t in self.ocr(img)) for img in images[:2]]
        if texts[0] != texts[1]:
            before = " ".join(texts[0]) or "(none)"
            after = " ".join(texts[1]) or "(none)"
            return {
                "manipulated": True,
                "confidence": 0.9,
                "rationale": f"extracted text differs between views: {before!r} vs {after!r}",
            }
        return {
            "manipulated": False,
            "confidence": 0.8,
            "rationale": "extracted text agrees between views",
        }


class TesseractOcrEngine:
    """OCR through a locally installed tesseract binary."""

    kinds = ("ocr",)
    name = "tesseract"

    def __init__(self, config=None):
        try:
            import pytesseract
        except ImportError as exc:
            raise EngineStartupError("tesseract engine requires pytesseract") from exc
        try:
            pytesseract.get_tesseract_version()
        except Exception as exc:
            raise EngineStartupError(f"tesseract binary not usable: {exc}") from exc
        self._pt = pytesseract

    def ocr(self, img: np.ndarray) -> list[dict]:
        from PIL import Image

        data = self._pt.image_to_data(
            Image.fromarray(img), output_type=self._pt.Output.DICT
        )
        tokens = []
        for text, conf, x, y, w, h in zip(
            data["text"], data["conf"], data["left"], data["top"], data["width"], data["height"]
        ):
            text = text.strip()
            if not text or int(conf) < 0 or w <= 0 or h <= 0:
                continue
            tokens.append(
                {
                    "text": text,
                    "box": {"x": int(x), "y": int(y), "w": int(w), "h": int(h), "score": 1.0},
                    "confidence": max(0.0, min(1.0, int(conf) / 100.0)),
                }
            )
        tokens.sort(key=lambda t: (t["box"]["y"], t["box"]["x"]))
        return tokens


class OpenAiVlmEngine:
    """Key-object naming and verdicts via an OpenAI-compatible vision API.

    The credential is read at construction so a missing key fails at startup,
    never mid-request.
    """

    kinds = ("keyobjects", "verdict")
    name = "openai"

    KEYOBJECTS_PROMPT = (
        "List the semantically important physical objects in this scene that a"
        " person relies on for situational awareness (signs, signals, warnings)."
        ' Respond with JSON: {"objects": ["..."]}.'
    )

    def __init__(self, config):
        key = os.environ.get(config.api_key_env, "")
        if not key:
            raise EngineStartupError(
                f"openai engine requires the {config.api_key_env} environment variable"
            )
        self._key = key
        self._base = config.vlm_base_url.rstrip("/")
        self._model = config.vlm_model

    def _chat(self, prompt: str, images: list[np.ndarray]) -> str:
        import base64
        import io

        import requests
        from PIL import Image

        content = [{"type": "text", "text": prompt}]
        for img in images:
            buf = io.BytesIO()
            Image.fromarray(img).save(buf, format="PNG")
            b64 = base64.b64encode(buf.getvalue()).decode("ascii")
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
        resp = requests.post(
            f"{self._base}/chat/completions",
            headers={"Authorization": f"Bearer {self._key}"},
            json={"model": self._model, "messages": [{"role": "user", "content": content}]},
            timeout=60,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def keyobjects(self, img: np.ndarray) -> list[str]:
        reply = self._chat(self.KEYOBJECTS_PROMPT, [img])
        try:
            return [str(o) for o in json.loads(reply)["objects"]]
        except (ValueError, KeyError, TypeError):
            return [line.strip("-* ") for line in reply.splitlines() if line.strip()]

    def verdict(self, prompt: str, images: list[np.ndarray]) -> dict:
        reply = self._chat(
            prompt + '\nRespond with JSON: {"manipulated": bool, "confidence": 0..1,'
            ' "rationale": "..."}.',
            images,
        )
        try:
            data = json.loads(reply)
            return {
                "manipulated": bool(data["manipulated"]),
                "confidence": float(data.get("confidence", 0.5)),
                "rationale": str(data.get("rationale", "")),
            }
        except (ValueError, KeyError, TypeError):
            lowered = reply.lower()
            return {
                "manipulated": "yes" in lowered or "manipulated" in lowered,
                "confidence": 0.5,
                "rationale": reply[:400],
            }


ENGINE_CLASSES = {
    cls.name: cls for cls in (ClassicalEngine, TesseractOcrEngine, OpenAiVlmEngine)
}


def build_engine(name: str, config):
    cls = ENGINE_CLASSES.get(name)
    if cls is None:
        raise EngineStartupError(f"unknown engine: {name!r} (have {sorted(ENGINE_CLASSES)})")
    return cls(config)
