"""Pluggable model-backend abstraction with a JSON-over-HTTP wire contract.

A BackendPool routes each operation kind to its configured backend, enforces
the response contract (so pipelines never see malformed model output), and
records one latency span per call into the request's trace.

Wire protocol (JSON over HTTP POST, images PNG base64):
    POST /v1/keyobjects  {"image": {"png_base64": s}}          -> {"objects": [str]}
    POST /v1/detect      {"image": ..., "query": s}            -> {"boxes": [{x,y,w,h,score}]}
    POST /v1/segment     {"image": ..., "boxes": [...]}        -> {"masks": [{"rle": s}]}
    POST /v1/ocr         {"image": ...}                        -> {"tokens": [{text,box,confidence}]}
    POST /v1/verdict     {"prompt": s, "images": [...]}        -> {manipulated,confidence,rationale}
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import requests

from .errors import BackendError, BackendTimeout, ConfigError, ProtocolError
from .maskops import RasterMask, rle_decode
from .model import BoundingBox, ImageRef, OcrToken
from .storage import ref_to_png_base64

KINDS = ("keyobjects", "detect", "segment", "ocr", "verdict")

# Which stages sit near the device by default; heavy semantic reasoning is
# remote. Overridable per endpoint.
DEFAULT_TIERS = {
    "keyobjects": "cloud",
    "detect": "edge",
    "segment": "edge",
    "ocr": "edge",
    "verdict": "cloud",
}

RESPONSE_CAP_BYTES = 16 * 1024 * 1024


@dataclass(frozen=True)
class BackendEndpoint:
    kind: str
    locator: str
    timeout_ms: int = 10_000
    tier: str = ""
    token: Optional[str] = None
    # Transport retries (timeouts, connection failures). Default 0: a stale
    # verdict is worse than an explicit failure, so retrying is opt-in.
    retries: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown backend kind: {self.kind}")
        if self.timeout_ms <= 0:
            raise ConfigError(f"endpoint {self.kind}: timeout must be positive")
        if self.retries < 0:
            raise ConfigError(f"endpoint {self.kind}: retries must be non-negative")
        if not self.tier:
            object.__setattr__(self, "tier", DEFAULT_TIERS[self.kind])
        elif self.tier not in ("edge", "cloud"):
            raise ConfigError(f"endpoint {self.kind}: tier must be edge or cloud")


@dataclass(frozen=True)
class Span:
    stage: str
    tier: str
    start_ns: int
    elapsed_ns: int

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "tier": self.tier,
            "start_ns": self.start_ns,
            "elapsed_ns": self.elapsed_ns,
        }


class LatencyTrace:
    """Per-request span collector; safe for concurrent appends."""

    def __init__(self):
        self._lock = threading.Lock()
        self._spans: list[Span] = []
        self.wall_ns: Optional[int] = None

    def record(self, span: Span) -> None:
        with self._lock:
            self._spans.append(span)

    @property
    def spans(self) -> tuple[Span, ...]:
        with self._lock:
            return tuple(self._spans)

    @contextmanager
    def span(self, stage: str, tier: str):
        start = time.monotonic_ns()
        try:
            yield
        finally:
            self.record(Span(stage, tier, start, time.monotonic_ns() - start))

    def to_dict(self) -> dict:
        return {"wall_ns": self.wall_ns, "spans": [s.to_dict() for s in self.spans]}


@dataclass(frozen=True)
class SemanticVerdict:
    manipulated: bool
    confidence: float
    rationale: str = ""


class Backend:
    """Raw backend operations; contract enforcement lives in BackendPool."""

    # In-process backends cannot interrupt themselves; the pool converts an
    # overlong call into a timeout after the fact. Network backends enforce
    # their own deadline instead.
    pool_enforces_timeout = False

    def call_keyobjects(self, image: ImageRef) -> list[str]:
        raise NotImplementedError

    def call_detect(self, image: ImageRef, query: str) -> list[BoundingBox]:
        raise NotImplementedError

    def call_segment(self, image: ImageRef, boxes: Sequence[BoundingBox]) -> list[RasterMask]:
        raise NotImplementedError

    def call_ocr(self, image: ImageRef) -> list[OcrToken]:
        raise NotImplementedError

    def call_verdict(self, prompt: str, images: Sequence[ImageRef]) -> SemanticVerdict:
        raise NotImplementedError


class HttpBackend(Backend):
    """Client for the wire protocol above."""

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint
        self._base = endpoint.locator.rstrip("/")

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self._base}{path}"
        headers = {}
        if self.endpoint.token:
            headers["Authorization"] = f"Bearer {self.endpoint.token}"
        resp = None
        for attempt in range(self.endpoint.retries + 1):
            start = time.monotonic()
            try:
                resp = requests.post(
                    url, json=payload, headers=headers, timeout=self.endpoint.timeout_ms / 1000.0
                )
                break
            except requests.Timeout:
                elapsed = (time.monotonic() - start) * 1000.0
                if attempt == self.endpoint.retries:
                    raise BackendTimeout(f"{url} timed out after {elapsed:.0f} ms", elapsed) from None
            except requests.RequestException as exc:
                if attempt == self.endpoint.retries:
                    raise BackendError(f"{url}: {exc}") from None
        if len(resp.content) > RESPONSE_CAP_BYTES:
            raise ProtocolError(f"{url}: response exceeds {RESPONSE_CAP_BYTES} byte cap")
        if resp.status_code != 200:
            raise ProtocolError(f"{url}: HTTP {resp.status_code}", resp.text)
        try:
            body = resp.json()
        except ValueError:
            raise ProtocolError(f"{url}: response is not JSON", resp.text) from None
        if not isinstance(body, dict):
            raise ProtocolError(f"{url}: response is not a JSON object", resp.text)
        return body

    @staticmethod
    def _image_payload(image: ImageRef) -> dict:
        return {"png_base64": ref_to_png_base64(image)}

    def call_keyobjects(self, image):
        body = self._post("/v1/keyobjects", {"image": self._image_payload(image)})
        objects = body.get("objects")
        if not isinstance(objects, list) or any(not isinstance(o, str) for o in objects):
            raise ProtocolError("keyobjects: 'objects' must be a list of strings", str(body))
        return objects

    def call_detect(self, image, query):
        body = self._post("/v1/detect", {"image": self._image_payload(image), "query": query})
        boxes = body.get("boxes")
        if not isinstance(boxes, list):
            raise ProtocolError("detect: 'boxes' must be a list", str(body))
        try:
            return [
                BoundingBox(int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"]), float(b["score"]))
                for b in boxes
            ]
        except (TypeError, KeyError, ValueError) as exc:
            raise ProtocolError(f"detect: malformed box ({exc})", str(body)) from None

    def call_segment(self, image, boxes):
        payload = {
            "image": self._image_payload(image),
            "boxes": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": b.score} for b in boxes],
        }
        body = self._post("/v1/segment", payload)
        masks = body.get("masks")
        if not isinstance(masks, list):
            raise ProtocolError("segment: 'masks' must be a list", str(body))
        out = []
        for m in masks:
            if not isinstance(m, dict) or not isinstance(m.get("rle"), str):
                raise ProtocolError("segment: each mask needs an 'rle' string", str(body))
            try:
                out.append(rle_decode(m["rle"]))
            except ValueError as exc:
                raise ProtocolError(f"segment: {exc}", m["rle"][:80]) from None
        return out

    def call_ocr(self, image):
        body = self._post("/v1/ocr", {"image": self._image_payload(image)})
        tokens = body.get("tokens")
        if not isinstance(tokens, list):
            raise ProtocolError("ocr: 'tokens' must be a list", str(body))
        try:
            return [
                OcrToken(
                    str(t["text"]),
                    BoundingBox(
                        int(t["box"]["x"]), int(t["box"]["y"]),
                        int(t["box"]["w"]), int(t["box"]["h"]),
                        float(t["box"].get("score", 1.0)),
                    ),
                    float(t["confidence"]),
                )
                for t in tokens
            ]
        except (TypeError, KeyError, ValueError) as exc:
            raise ProtocolError(f"ocr: malformed token ({exc})", str(body)) from None

    def call_verdict(self, prompt, images):
        payload = {"prompt": prompt, "images": [self._image_payload(i) for i in images]}
        body = self._post("/v1/verdict", payload)
        if not isinstance(body.get("manipulated"), bool):
            raise ProtocolError("verdict: 'manipulated' must be a bool", str(body))
        try:
            return SemanticVerdict(
                body["manipulated"], float(body["confidence"]), str(body.get("rationale", ""))
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ProtocolError(f"verdict: malformed response ({exc})", str(body)) from None


_registry_lock = threading.Lock()
_oracle_registry: dict[str, Backend] = {}


def open_backend(endpoint: BackendEndpoint) -> Backend:
    """Backend instance for a locator; oracle instances are shared per locator
    so their noise-event logs accumulate in one place."""
    if endpoint.locator.startswith("oracle:"):
        from .oracle import OracleBackend

        with _registry_lock:
            backend = _oracle_registry.get(endpoint.locator)
            if backend is None:
                backend = OracleBackend.from_locator(endpoint.locator)
                _oracle_registry[endpoint.locator] = backend
            return backend
    if endpoint.locator.startswith(("http://", "https://")):
        return HttpBackend(endpoint)
    raise ConfigError(f"unsupported backend locator: {endpoint.locator}")


def get_oracle(locator: str):
    """The shared oracle instance for a locator, creating it if needed."""
    return open_backend(BackendEndpoint(kind="verdict", locator=locator))


class BackendPool:
    """Contract-enforcing front end over the configured backends.

    Every call appends exactly one span (stage, tier, start, elapsed) to the
    supplied trace, including on failure; backend errors propagate with a
    `.stage` attribute so callers can attribute the failing stage.
    """

    def __init__(self, endpoints: Mapping[str, BackendEndpoint]):
        missing = [k for k in KINDS if k not in endpoints]
        if missing:
            raise ConfigError(f"missing backend endpoints: {', '.join(missing)}")
        self._endpoints = dict(endpoints)
        self._backends = {kind: open_backend(ep) for kind, ep in self._endpoints.items()}

    def endpoint(self, kind: str) -> BackendEndpoint:
        return self._endpoints[kind]

    def _call(self, kind: str, trace: Optional[LatencyTrace], fn):
        ep = self._endpoints[kind]
        backend = self._backends[kind]
        start = time.monotonic_ns()
        try:
            result = fn()
        except BackendError as exc:
            exc.stage = kind
            raise
        finally:
            if trace is not None:
                trace.record(Span(kind, ep.tier, start, time.monotonic_ns() - start))
        elapsed_ms = (time.monotonic_ns() - start) / 1e6
        if backend.pool_enforces_timeout and elapsed_ms > ep.timeout_ms:
            exc = BackendTimeout(
                f"{kind} call exceeded {ep.timeout_ms} ms (took {elapsed_ms:.0f} ms)", elapsed_ms
            )
            exc.stage = kind
            raise exc
        return result

    def identify_key_objects(self, image: ImageRef, trace: Optional[LatencyTrace] = None) -> list[str]:
        names = self._call("keyobjects", trace, lambda: self._backends["keyobjects"].call_keyobjects(image))
        seen, out = set(), []
        for name in names:
            if not isinstance(name, str) or not name:
                raise self._protocol("keyobjects", "empty or non-string object name")
            if name not in seen:
                seen.add(name)
                out.append(name)
        return out

    def detect(self, image: ImageRef, query: str, trace: Optional[LatencyTrace] = None) -> list[BoundingBox]:
        if not query:
            raise ValueError("detect query must be non-empty")
        boxes = self._call("detect", trace, lambda: self._backends["detect"].call_detect(image, query))
        for b in boxes:
            if not b.valid_for(image.width, image.height):
                raise self._protocol("detect", f"box {b} invalid for {image.width}x{image.height}")
        return sorted(boxes, key=lambda b: -b.score)

    def segment(
        self, image: ImageRef, boxes: Sequence[BoundingBox], trace: Optional[LatencyTrace] = None
    ) -> list[RasterMask]:
        if not boxes:
            return []
        masks = self._call("segment", trace, lambda: self._backends["segment"].call_segment(image, boxes))
        if len(masks) != len(boxes):
            raise self._protocol("segment", f"{len(boxes)} boxes in, {len(masks)} masks out")
        for m in masks:
            if (m.width, m.height) != (image.width, image.height):
                raise self._protocol(
                    "segment", f"mask {m.width}x{m.height} vs image {image.width}x{image.height}"
                )
        return masks

    def ocr(self, image: ImageRef, trace: Optional[LatencyTrace] = None) -> list[OcrToken]:
        tokens = self._call("ocr", trace, lambda: self._backends["ocr"].call_ocr(image))
        for t in tokens:
            if not t.text or "\n" in t.text or "\r" in t.text:
                raise self._protocol("ocr", f"bad token text {t.text!r}")
            if not t.box.valid_for(image.width, image.height) or not (0.0 <= t.confidence <= 1.0):
                raise self._protocol("ocr", f"bad token geometry/confidence {t}")
        return sorted(tokens, key=lambda t: (t.box.y, t.box.x))

    def semantic_verdict(
        self, prompt: str, images: Sequence[ImageRef], trace: Optional[LatencyTrace] = None
    ) -> SemanticVerdict:
        if not prompt:
            raise ValueError("verdict prompt must be non-empty")
        if not 1 <= len(images) <= 2:
            raise ValueError(f"verdict takes 1 or 2 images, got {len(images)}")
        verdict = self._call(
            "verdict", trace, lambda: self._backends["verdict"].call_verdict(prompt, images)
        )
        if not (0.0 <= verdict.confidence <= 1.0):
            raise self._protocol("verdict", f"confidence {verdict.confidence} outside [0,1]")
        return verdict

    @staticmethod
    def _protocol(kind: str, message: str) -> ProtocolError:
        exc = ProtocolError(f"{kind}: {message}")
        exc.stage = kind
        return exc
