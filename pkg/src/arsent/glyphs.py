"""Fixed 5x7 block-glyph font and text layout.

Rendering from hard-coded bitmaps instead of a font stack keeps synthesized
fixtures byte-stable across platforms. Every glyph is a single 8-connected
component, which also makes the glyphs recoverable by template matching.
"""

from __future__ import annotations

import numpy as np

from .model import BoundingBox

GLYPH_W = 5
GLYPH_H = 7

# fmt: off
_FONT = {
    "A": (".XXX.", "X...X", "X...X", "XXXXX", "X...X", "X...X", "X...X"),
    "B": ("XXXX.", "X...X", "X...X", "XXXX.", "X...X", "X...X", "XXXX."),
    "C": (".XXX.", "X...X", "X....", "X....", "X....", "X...X", ".XXX."),
    "D": ("XXXX.", "X...X", "X...X", "X...X", "X...X", "X...X", "XXXX."),
    "E": ("XXXXX", "X....", "X....", "XXXX.", "X....", "X....", "XXXXX"),
    "F": ("XXXXX", "X....", "X....", "XXXX.", "X....", "X....", "X...."),
    "G": (".XXX.", "X...X", "X....", "X.XXX", "X...X", "X...X", ".XXX."),
    "H": ("X...X", "X...X", "X...X", "XXXXX", "X...X", "X...X", "X...X"),
    "I": ("XXXXX", "..X..", "..X..", "..X..", "..X..", "..X..", "XXXXX"),
    "J": ("..XXX", "...X.", "...X.", "...X.", "...X.", "X..X.", ".XX.."),
    "K": ("X...X", "X..X.", "X.X..", "XX...", "X.X..", "X..X.", "X...X"),
    "L": ("X....", "X....", "X....", "X....", "X....", "X....", "XXXXX"),
    "M": ("X...X", "XX.XX", "X.X.X", "X.X.X", "X...X", "X...X", "X...X"),
    "N": ("X...X", "XX..X", "X.X.X", "X..XX", "X...X", "X...X", "X...X"),
    "O": (".XXX.", "X...X", "X...X", "X...X", "X...X", "X...X", ".XXX."),
    "P": ("XXXX.", "X...X", "X...X", "XXXX.", "X....", "X....", "X...."),
    "Q": (".XXX.", "X...X", "X...X", "X...X", "X.X.X", "X..X.", ".XX.X"),
    "R": ("XXXX.", "X...X", "X...X", "XXXX.", "X.X..", "X..X.", "X...X"),
    "S": (".XXXX", "X....", "X....", ".XXX.", "....X", "....X", "XXXX."),
    "T": ("XXXXX", "..X..", "..X..", "..X..", "..X..", "..X..", "..X.."),
    "U": ("X...X", "X...X", "X...X", "X...X", "X...X", "X...X", ".XXX."),
    "V": ("X...X", "X...X", "X...X", "X...X", ".X.X.", ".X.X.", "..X.."),
    "W": ("X...X", "X...X", "X...X", "X.X.X", "X.X.X", "XX.XX", "X...X"),
    "X": ("X...X", "X...X", ".X.X.", "..X..", ".X.X.", "X...X", "X...X"),
    "Y": ("X...X", "X...X", ".X.X.", "..X..", "..X..", "..X..", "..X.."),
    "Z": ("XXXXX", "....X", "...X.", "..X..", ".X...", "X....", "XXXXX"),
    "0": (".XXX.", "X...X", "X..XX", "X.X.X", "XX..X", "X...X", ".XXX."),
    "1": ("..X..", ".XX..", "..X..", "..X..", "..X..", "..X..", ".XXX."),
    "2": (".XXX.", "X...X", "....X", "...X.", "..X..", ".X...", "XXXXX"),
    "3": ("XXXXX", "...X.", "..X..", "...X.", "....X", "X...X", ".XXX."),
    "4": ("...X.", "..XX.", ".X.X.", "X..X.", "XXXXX", "...X.", "...X."),
    "5": ("XXXXX", "X....", "XXXX.", "....X", "....X", "X...X", ".XXX."),
    "6": ("..XX.", ".X...", "X....", "XXXX.", "X...X", "X...X", ".XXX."),
    "7": ("XXXXX", "....X", "...X.", "..X..", ".X...", ".X...", ".X..."),
    "8": (".XXX.", "X...X", "X...X", ".XXX.", "X...X", "X...X", ".XXX."),
    "9": (".XXX.", "X...X", "X...X", ".XXXX", "....X", "...X.", ".XX.."),
    "→": ("..X..", "...X.", "....X", "XXXXX", "....X", "...X.", "..X.."),
    "←": ("..X..", ".X...", "X....", "XXXXX", "X....", ".X...", "..X.."),
}
# fmt: on

GLYPH_SET = frozenset(_FONT)

# Visually confusable character pairs; used both for synthesized character
# substitution attacks and for deterministic OCR error injection.
CONFUSABLE = {
    "O": "0", "0": "O", "I": "1", "1": "I", "S": "5", "5": "S",
    "B": "8", "8": "B", "E": "3", "3": "E", "A": "4", "G": "6",
    "T": "7", "Z": "2", "L": "1", "→": "←", "←": "→",
}

_ARRAYS = {
    ch: np.array([[c == "X" for c in row] for row in rows], dtype=bool)
    for ch, rows in _FONT.items()
}


def glyph_bitmap(ch: str) -> np.ndarray:
    """(7, 5) bool bitmap of one glyph."""
    if ch not in _ARRAYS:
        raise ValueError(f"unsupported glyph: {ch!r}")
    return _ARRAYS[ch]


def glyph_array(ch: str, scale: int) -> np.ndarray:
    """Glyph bitmap scaled up by integer block replication."""
    return np.kron(glyph_bitmap(ch), np.ones((scale, scale), dtype=bool))


def token_width(token: str, scale: int) -> int:
    """Tight pixel width of one token: glyphs plus 1*scale inter-glyph gaps."""
    n = len(token)
    return n * GLYPH_W * scale + (n - 1) * scale


def token_height(scale: int) -> int:
    return GLYPH_H * scale


def layout_tokens(text: str, origin: tuple[int, int], scale: int) -> list[tuple[str, BoundingBox]]:
    """Whitespace-split tokens with their tight boxes, left to right from origin.

    Tokens are separated by a 3*scale space advance. Raises on empty text or
    characters without a glyph.
    """
    if not text.strip():
        raise ValueError("empty text")
    unsupported = sorted({c for c in text if c != " " and c not in _FONT})
    if unsupported:
        raise ValueError(f"unsupported glyphs: {', '.join(repr(c) for c in unsupported)}")
    x, y = origin
    out = []
    for token in text.split():
        w = token_width(token, scale)
        out.append((token, BoundingBox(x, y, w, token_height(scale), 1.0)))
        x += w + 3 * scale
    return out


def draw_token(canvas: np.ndarray, token: str, box: BoundingBox, scale: int, color) -> np.ndarray:
    """Draw a token's glyph pixels onto an RGB canvas; returns the set-pixel mask.

    The returned (H, W) bool array marks exactly the pixels written, so callers
    can record precise content footprints.
    """
    h, w = canvas.shape[:2]
    painted = np.zeros((h, w), dtype=bool)
    x = box.x
    for ch in token:
        bits = glyph_array(ch, scale)
        gh, gw = bits.shape
        ys, xs = np.nonzero(bits)
        canvas[box.y + ys, x + xs] = color
        painted[box.y + ys, x + xs] = True
        x += gw + scale
    return painted
