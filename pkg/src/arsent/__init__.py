"""arsent: detection engine for task-detrimental virtual content in AR.

Two pipelines over raw/AR frame pairs: obstruction detection (virtual content
covering semantically important real-world objects, measured by exact mask
overlap) and VIM detection (virtual content manipulating the meaning of
real-world text, assessed by OCR differencing plus a semantic verdict
backend). All model backends sit behind one pluggable protocol with
deterministic ground-truth oracles for testing.
"""

from .maskops import (
    ObstructionMeasure,
    RasterMask,
    area,
    flag,
    intersection_area,
    obstruction_ratio,
    rle_decode,
    rle_encode,
)
from .model import (
    BoundingBox,
    GroundTruth,
    ImageRef,
    KeyObject,
    Label,
    Mitigation,
    OcrToken,
    ScenePair,
    Verdict,
    VimTaxonomy,
    validate_scene_pair,
)

__version__ = "0.1.0"
