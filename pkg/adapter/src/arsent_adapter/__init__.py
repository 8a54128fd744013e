"""Backend adapter: serves the arsent model-backend wire protocol.

Engines are pluggable per operation kind. The classical engine pack answers
from pixel analysis alone (color-region panels, template-matched block-glyph
OCR, text-comparison verdicts) so the full protocol is exercisable with no ML
runtime; tesseract and hosted-VLM wrappers slot in where available. A
record/replay layer captures responses byte-for-byte for offline integration
testing of the detection engine.
"""

__version__ = "0.1.0"
