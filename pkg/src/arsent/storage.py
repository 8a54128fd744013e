"""File and wire serialization: PNG images, mask PNGs, sidecars, manifests.

Dataset layout on disk:
    <out>/scenes/<id>/{raw.png, ar.png, content_mask.png, truth.json}
    <out>/manifest.jsonl     one {"id","raw","ar","content_mask","truth"} per line,
                             paths relative to the manifest directory

Mask PNGs are 8-bit grayscale; pixel value > 127 means inside the region.
"""

from __future__ import annotations

import base64
import io
import json
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .maskops import RasterMask, rle_decode, rle_encode
from .model import (
    BoundingBox,
    GroundTruth,
    ImageRef,
    KeyObject,
    Label,
    OcrToken,
    ScenePair,
    validate_scene_pair,
)


# --------------------------------------------------------------------------
# images
# --------------------------------------------------------------------------


def save_rgb_png(arr: np.ndarray, path: Path) -> None:
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(path, format="PNG")


def load_rgb_array(source) -> np.ndarray:
    """(h, w, 3) uint8 array from a path or PNG byte string."""
    if isinstance(source, (bytes, bytearray)):
        img = Image.open(io.BytesIO(source))
    else:
        img = Image.open(source)
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def image_ref_from_file(image_id: str, path: Path) -> ImageRef:
    with Image.open(path) as img:
        w, h = img.size
    return ImageRef(id=image_id, width=w, height=h, path=str(path))


def image_ref_from_array(image_id: str, arr: np.ndarray) -> ImageRef:
    h, w = arr.shape[:2]
    return ImageRef(id=image_id, width=w, height=h, pixels=arr.astype(np.uint8).tobytes())


def image_ref_from_png_bytes(image_id: str, data: bytes) -> ImageRef:
    return image_ref_from_array(image_id, load_rgb_array(data))


def rgb_of(ref: ImageRef) -> np.ndarray:
    """Pixel array of an ImageRef, loading from disk when path-backed."""
    if ref.pixels is not None:
        return np.frombuffer(ref.pixels, dtype=np.uint8).reshape(ref.height, ref.width, 3)
    if ref.path is None:
        raise ValueError(f"image {ref.id}: neither pixels nor path present")
    arr = load_rgb_array(Path(ref.path))
    if arr.shape[:2] != (ref.height, ref.width):
        raise ValueError(
            f"image {ref.id}: file is {arr.shape[1]}x{arr.shape[0]},"
            f" ref says {ref.width}x{ref.height}"
        )
    return arr


def ref_to_png_base64(ref: ImageRef) -> str:
    return base64.b64encode(png_bytes(rgb_of(ref))).decode("ascii")


def save_mask_png(mask: RasterMask, path: Path) -> None:
    arr = mask.to_array().astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_mask_png(path: Path) -> RasterMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return RasterMask.from_array(arr > 127)


# --------------------------------------------------------------------------
# sidecar (truth.json) codec
# --------------------------------------------------------------------------


def box_to_dict(box: BoundingBox) -> dict:
    return {"x": box.x, "y": box.y, "w": box.w, "h": box.h, "score": box.score}


def box_from_dict(d: dict) -> BoundingBox:
    return BoundingBox(
        x=int(d["x"]), y=int(d["y"]), w=int(d["w"]), h=int(d["h"]),
        score=float(d.get("score", 1.0)),
    )


def token_to_dict(tok: OcrToken) -> dict:
    return {"text": tok.text, "box": box_to_dict(tok.box), "confidence": tok.confidence}


def token_from_dict(d: dict) -> OcrToken:
    return OcrToken(
        text=str(d["text"]), box=box_from_dict(d["box"]), confidence=float(d.get("confidence", 1.0))
    )


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "label": truth.label.value,
        "key_objects": [
            {"name": o.name, "box": box_to_dict(o.box), "mask_rle": rle_encode(o.mask)}
            for o in truth.key_objects
        ],
        "vim_format": truth.vim_format,
        "vim_purpose": truth.vim_purpose,
        "text_before": truth.text_before,
        "text_after": truth.text_after,
        "ocr_raw": [token_to_dict(t) for t in truth.ocr_raw],
        "ocr_ar": [token_to_dict(t) for t in truth.ocr_ar],
    }


def truth_from_dict(d: dict) -> GroundTruth:
    return GroundTruth(
        label=Label(d["label"]),
        key_objects=tuple(
            KeyObject(name=o["name"], box=box_from_dict(o["box"]), mask=rle_decode(o["mask_rle"]))
            for o in d.get("key_objects", [])
        ),
        vim_format=d.get("vim_format"),
        vim_purpose=d.get("vim_purpose"),
        text_before=d.get("text_before"),
        text_after=d.get("text_after"),
        ocr_raw=tuple(token_from_dict(t) for t in d.get("ocr_raw", [])),
        ocr_ar=tuple(token_from_dict(t) for t in d.get("ocr_ar", [])),
    )


def save_truth(truth: GroundTruth, path: Path) -> None:
    path.write_text(json.dumps(truth_to_dict(truth), indent=1, sort_keys=True), encoding="utf-8")


def load_truth(path: Path) -> GroundTruth:
    return truth_from_dict(json.loads(path.read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


def write_manifest(records: Iterable[dict], path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_manifest(path: Path) -> list[ScenePair]:
    """Load and validate every scene pair listed in a JSONL manifest.

    Any parse failure or invariant violation raises a ValueError citing the
    offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    pairs: list[ScenePair] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            try:
                pair = _pair_from_record(rec, base)
            except (KeyError, ValueError, OSError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            violations = validate_scene_pair(pair)
            if violations:
                raise ValueError(f"line {lineno}: " + "; ".join(violations))
            pairs.append(pair)
    return pairs


def _pair_from_record(rec: dict, base: Path) -> ScenePair:
    scene_id = str(rec["id"])
    raw = image_ref_from_file(f"{scene_id}/raw", base / rec["raw"])
    ar = image_ref_from_file(f"{scene_id}/ar", base / rec["ar"])
    content = load_mask_png(base / rec["content_mask"])
    truth = load_truth(base / rec["truth"]) if rec.get("truth") else None
    return ScenePair(id=scene_id, raw=raw, ar=ar, content_mask=content, truth=truth)


def scene_record(scene_id: str, scene_dir: "str | None" = None) -> dict:
    """Manifest row for the standard on-disk layout."""
    d = scene_dir if scene_dir is not None else f"scenes/{scene_id}"
    return {
        "id": scene_id,
        "raw": f"{d}/raw.png",
        "ar": f"{d}/ar.png",
        "content_mask": f"{d}/content_mask.png",
        "truth": f"{d}/truth.json",
    }


def write_scene(pair: ScenePair, out_dir: Path) -> dict:
    """Write one pair's files under out_dir/scenes/<id>/ and return its manifest row."""
    scene_dir = out_dir / "scenes" / pair.id
    scene_dir.mkdir(parents=True, exist_ok=True)
    save_rgb_png(rgb_of(pair.raw), scene_dir / "raw.png")
    save_rgb_png(rgb_of(pair.ar), scene_dir / "ar.png")
    save_mask_png(pair.content_mask, scene_dir / "content_mask.png")
    if pair.truth is not None:
        save_truth(pair.truth, scene_dir / "truth.json")
    return scene_record(pair.id)
