"""Domain types shared by the pipelines, the synthesizer, and the eval harness.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .maskops import RasterMask, area, intersection_area

MAX_IMAGE_DIM = 8192

# Segmentation models commonly bleed past detector boxes; masks are accepted
# up to this margin outside the annotated box.
DEFAULT_BOX_SLACK_PX = 8


class Label(str, Enum):
    NONE = "none"
    OBSTRUCTION = "obstruction"
    VIM = "vim"


class Mitigation(str, Enum):
    NONE = "none"
    MAKE_TRANSLUCENT = "make_translucent"


# Open taxonomy: the default axis members below can be extended through
# PipelineConfig without touching this module.
DEFAULT_VIM_FORMATS = (
    "text_alteration",
    "text_addition",
    "symbol_replacement",
    "misleading_graphic",
)
DEFAULT_VIM_PURPOSES = ("misdirection", "misinformation", "distraction")


@dataclass(frozen=True)
class VimTaxonomy:
    """Attack classification along the format and purpose axes."""

    format: str
    purpose: str


@dataclass(frozen=True)
class ImageRef:
    """Scene-image carrier: inline RGB buffer or an external file, never both."""

    id: str
    width: int
    height: int
    pixels: Optional[bytes] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int
    score: float = 1.0

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def valid_for(self, width: int, height: int) -> bool:
        return (
            self.w > 0
            and self.h > 0
            and self.x >= 0
            and self.y >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
            and 0.0 <= self.score <= 1.0
        )


@dataclass(frozen=True)
class KeyObject:
    """A semantically important real-world object with its box and mask."""

    name: str
    box: BoundingBox
    mask: RasterMask


@dataclass(frozen=True)
class OcrToken:
    text: str
    box: BoundingBox
    confidence: float = 1.0


@dataclass(frozen=True)
class GroundTruth:
    """Sidecar annotation for one scene pair.

    ocr_raw / ocr_ar hold the exact render-time token boxes; they exist so
    deterministic oracle backends can answer OCR queries from the sidecar.
    """

    label: Label
    key_objects: tuple[KeyObject, ...] = ()
    vim_format: Optional[str] = None
    vim_purpose: Optional[str] = None
    text_before: Optional[str] = None
    text_after: Optional[str] = None
    ocr_raw: tuple[OcrToken, ...] = ()
    ocr_ar: tuple[OcrToken, ...] = ()


@dataclass(frozen=True)
class ScenePair:
    id: str
    raw: ImageRef
    ar: ImageRef
    content_mask: RasterMask
    truth: Optional[GroundTruth] = None


@dataclass(frozen=True)
class Verdict:
    attacked: bool
    kind: Label
    confidence: float
    mitigation: Mitigation
    rationale: str = ""


def _validate_image_ref(ref: ImageRef, name: str, out: list[str]) -> None:
    if (ref.pixels is None) == (ref.path is None):
        out.append(f"{name}: exactly one of pixels or path must be present")
    if ref.width <= 0 or ref.height <= 0:
        out.append(f"{name}: width and height must be positive")
    elif ref.width > MAX_IMAGE_DIM or ref.height > MAX_IMAGE_DIM:
        out.append(f"{name}: dimensions exceed sanity bound {MAX_IMAGE_DIM}")
    if ref.pixels is not None:
        expected = ref.width * ref.height * 3
        if len(ref.pixels) != expected:
            out.append(
                f"{name}: pixel buffer length {len(ref.pixels)} != width*height*3 ({expected})"
            )


def _validate_key_object(
    obj: KeyObject, image_w: int, image_h: int, slack_px: int, out: list[str]
) -> None:
    name = f"key object '{obj.name}'"
    if obj.box.w <= 0 or obj.box.h <= 0:
        out.append(f"{name}: box width and height must be positive")
        return
    if not (0.0 <= obj.box.score <= 1.0):
        out.append(f"{name}: box score outside [0,1]")
    if obj.box.x < 0 or obj.box.y < 0 or obj.box.x + obj.box.w > image_w or obj.box.y + obj.box.h > image_h:
        out.append(f"{name}: box exceeds image bounds")
    if obj.mask.width != image_w or obj.mask.height != image_h:
        out.append(
            f"{name}: mask dimensions {obj.mask.width}x{obj.mask.height}"
            f" do not match image {image_w}x{image_h}"
        )
        return
    dilated = RasterMask.from_rect(
        image_w,
        image_h,
        obj.box.x - slack_px,
        obj.box.y - slack_px,
        obj.box.w + 2 * slack_px,
        obj.box.h + 2 * slack_px,
    )
    if area(obj.mask) != intersection_area(obj.mask, dilated):
        out.append(f"{name}: mask extends outside box dilated by {slack_px} px")


def validate_scene_pair(pair: ScenePair, slack_px: int = DEFAULT_BOX_SLACK_PX) -> list[str]:
    """Check every type invariant; returns one description per violation.

    Validation never raises: a non-empty list is the failure signal.
    """
    out: list[str] = []
    _validate_image_ref(pair.raw, "raw", out)
    _validate_image_ref(pair.ar, "ar", out)
    if (pair.raw.width, pair.raw.height) != (pair.ar.width, pair.ar.height):
        out.append("raw/ar dimension mismatch")
    if (pair.content_mask.width, pair.content_mask.height) != (pair.raw.width, pair.raw.height):
        out.append(
            f"content_mask dimension mismatch: {pair.content_mask.width}x{pair.content_mask.height}"
            f" vs image {pair.raw.width}x{pair.raw.height}"
        )
    truth = pair.truth
    if truth is None:
        return out
    if truth.label == Label.OBSTRUCTION and not truth.key_objects:
        out.append("obstruction label requires key objects")
    if truth.label == Label.VIM and (truth.vim_format is None or truth.vim_purpose is None):
        out.append("vim label requires vim_format and vim_purpose")
    for obj in truth.key_objects:
        _validate_key_object(obj, pair.raw.width, pair.raw.height, slack_px, out)
    return out
