"""Exact raster-mask arithmetic and the RLE wire codec.

Masks are immutable bit-sets backed by a single Python integer (bit i is
pixel i in row-major order), so area and intersection run word-parallel
through the big-int machinery instead of touching pixels one by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAX_MASK_DIM = 8192

DEFAULT_THRESHOLD = 0.3


class RasterMask:
    """Binary per-pixel region; immutable after construction."""

    __slots__ = ("width", "height", "_bits")

    def __init__(self, width: int, height: int, bits: int = 0):
        if width <= 0 or height <= 0:
            raise ValueError(f"mask dimensions must be positive, got {width}x{height}")
        if width > MAX_MASK_DIM or height > MAX_MASK_DIM:
            raise ValueError(f"mask dimensions exceed sanity bound {MAX_MASK_DIM}")
        if bits < 0 or bits >> (width * height):
            raise ValueError("bit-set length exceeds width*height")
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "_bits", bits)

    def __setattr__(self, name, value):
        raise AttributeError("RasterMask is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, RasterMask)
            and self.width == other.width
            and self.height == other.height
            and self._bits == other._bits
        )

    def __hash__(self):
        return hash((self.width, self.height, self._bits))

    def __repr__(self):
        return f"RasterMask({self.width}x{self.height}, area={area(self)})"

    def get(self, x: int, y: int) -> bool:
        """Bit at pixel (x, y); raises IndexError outside the grid."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"pixel ({x}, {y}) outside {self.width}x{self.height}")
        return bool((self._bits >> (y * self.width + x)) & 1)

    def bits(self) -> int:
        return self._bits

    @classmethod
    def empty(cls, width: int, height: int) -> "RasterMask":
        return cls(width, height, 0)

    @classmethod
    def full(cls, width: int, height: int) -> "RasterMask":
        return cls(width, height, (1 << (width * height)) - 1)

    @classmethod
    def from_rect(cls, width: int, height: int, x: int, y: int, w: int, h: int) -> "RasterMask":
        """Axis-aligned rectangle, clipped to the mask grid."""
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, width), min(y + h, height)
        bits = 0
        if x1 > x0 and y1 > y0:
            row = ((1 << (x1 - x0)) - 1) << x0
            for yy in range(y0, y1):
                bits |= row << (yy * width)
        return cls(width, height, bits)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterMask":
        """Build from a 2-D array; nonzero means inside."""
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D array, got shape {arr.shape}")
        h, w = arr.shape
        flat = np.ascontiguousarray(arr != 0).ravel()
        packed = np.packbits(flat, bitorder="little")
        return cls(w, h, int.from_bytes(packed.tobytes(), "little"))

    def to_array(self) -> np.ndarray:
        """(height, width) bool array."""
        n = self.width * self.height
        raw = self._bits.to_bytes((n + 7) // 8, "little")
        flat = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:n]
        return flat.reshape(self.height, self.width).astype(bool)

    def to_rows(self) -> list[list[bool]]:
        """Per-pixel nested lists; intended for naive independent checks."""
        return [[bool(v) for v in row] for row in self.to_array()]

    def intersect(self, other: "RasterMask") -> "RasterMask":
        _check_same_dims(self, other)
        return RasterMask(self.width, self.height, self._bits & other._bits)

    def union(self, other: "RasterMask") -> "RasterMask":
        _check_same_dims(self, other)
        return RasterMask(self.width, self.height, self._bits | other._bits)

    def minus(self, other: "RasterMask") -> "RasterMask":
        _check_same_dims(self, other)
        return RasterMask(self.width, self.height, self._bits & ~other._bits)


def _check_same_dims(a: RasterMask, b: RasterMask) -> None:
    if a.width != b.width or a.height != b.height:
        raise ValueError(
            f"mask dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def area(mask: RasterMask) -> int:
    """Number of set pixels."""
    return mask.bits().bit_count()


def intersection_area(a: RasterMask, b: RasterMask) -> int:
    """Count of pixels set in both masks; requires identical dimensions."""
    _check_same_dims(a, b)
    return (a.bits() & b.bits()).bit_count()


def obstruction_ratio(key: RasterMask, content: RasterMask) -> float:
    """Fraction of the key-object mask covered by the content mask.

    Exact integer counts, divided once in double precision. The denominator
    is the key-object area: the measured question is how much of the
    critical object is hidden.
    """
    key_area = area(key)
    if key_area == 0:
        raise ValueError("empty key object mask")
    return intersection_area(key, content) / key_area


def flag(ratio: float, threshold: float) -> bool:
    """Threshold decision; inclusive so threshold 1.0 still flags total cover."""
    if not (0.0 < threshold <= 1.0):
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    if not (0.0 <= ratio <= 1.0):
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    return ratio >= threshold


@dataclass(frozen=True)
class ObstructionMeasure:
    """Overlap measurement of one key object against the content mask."""

    key_area: int
    overlap_area: int
    ratio: float
    flagged: bool


def measure(key: RasterMask, content: RasterMask, threshold: float) -> ObstructionMeasure:
    """area/intersection/ratio/flag for one key object, in one pass."""
    key_area = area(key)
    if key_area == 0:
        raise ValueError("empty key object mask")
    overlap = intersection_area(key, content)
    ratio = overlap / key_area
    return ObstructionMeasure(key_area, overlap, ratio, flag(ratio, threshold))


# ---------------------------------------------------------------------------
# RLE wire codec
#
# Grammar (ASCII, bit-exact): "<width> <height>\n<run>,<run>,...,<run>"
# Runs alternate starting with the count of 0-pixels, row-major scan order,
# and must sum to width*height. A zero first run is legal.
# ---------------------------------------------------------------------------


def rle_encode(mask: RasterMask) -> str:
    flat = mask.to_array().ravel().astype(np.int8)
    n = flat.size
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], boundaries, [n]))
    runs = np.diff(edges).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return f"{mask.width} {mask.height}\n" + ",".join(str(r) for r in runs)


def rle_decode(payload: str) -> RasterMask:
    try:
        header, _, body = payload.partition("\n")
        dims = header.split()
        if len(dims) != 2:
            raise ValueError("header must be '<width> <height>'")
        width, height = int(dims[0]), int(dims[1])
        if width <= 0 or height <= 0 or width > MAX_MASK_DIM or height > MAX_MASK_DIM:
            raise ValueError(f"bad dimensions {width}x{height}")
        runs = [int(tok) for tok in body.split(",")] if body else []
        if any(r < 0 for r in runs):
            raise ValueError("negative run")
    except ValueError as exc:
        raise ValueError(f"malformed RLE: {exc}") from None
    total = sum(runs)
    if total != width * height:
        raise ValueError(
            f"malformed RLE: runs sum to {total}, expected {width * height}"
        )
    values = np.repeat(np.arange(len(runs), dtype=np.int64) % 2, runs).astype(np.uint8)
    packed = np.packbits(values, bitorder="little")
    return RasterMask(width, height, int.from_bytes(packed.tobytes(), "little"))
