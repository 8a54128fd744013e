"""Image decode and mask serialization helpers (adapter-local, no engine deps)."""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


def decode_png_base64(data: str) -> np.ndarray:
    """(h, w, 3) uint8 array from a base64 PNG string."""
    raw = base64.b64decode(data)
    return np.asarray(Image.open(io.BytesIO(raw)).convert("RGB"), dtype=np.uint8)


def rle_encode_mask(mask: np.ndarray) -> str:
    """Serialize a binary (h, w) mask to the wire RLE grammar.

    '<width> <height>\\n<run>,<run>,...'; runs alternate starting with the
    count of 0-pixels, row-major, summing to width*height.
    """
    h, w = mask.shape
    flat = (mask != 0).ravel().astype(np.int8)
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return f"{w} {h}\n" + ",".join(str(r) for r in runs)


def soft_mask_to_rle(probabilities: np.ndarray, threshold: float = 0.5) -> str:
    """Binarize a soft (h, w) probability map and RLE-encode it.

    Promptable segmenters emit per-pixel probabilities; the wire carries only
    binary masks, so the cut happens here at the configured threshold.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"binarize threshold must be in (0, 1), got {threshold}")
    return rle_encode_mask(probabilities >= threshold)


def background_color(img: np.ndarray) -> tuple[int, int, int]:
    """Most frequent color; synthetic and indoor scenes have a dominant flat
    background, which anchors the region analysis."""
    colors, counts = np.unique(img.reshape(-1, 3), axis=0, return_counts=True)
    return tuple(int(c) for c in colors[counts.argmax()])
