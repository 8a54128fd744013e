"""HTTP analysis service for AR clients.

Endpoints:
    POST /v1/analyze/obstruction   {"raw":{"png_base64"},"ar":{...},"content_mask":{"rle":s}}
    POST /v1/analyze/vim           same request shape
    GET  /v1/health                {"status":"ok"}
    GET  /v1/config                redacted active configuration

Over-capacity requests are rejected with 429 immediately rather than queued:
the verdict for a stale frame is worthless to the headset. Backend failures
are translated per the configured fail policy; fail_closed reports
"undetermined-treat-as-attacked" because missing a real obstruction is the
costly error. Request ids derive from the request body hash, so identical
requests against deterministic backends produce identical reports (timing
aside).
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backend import BackendPool, LatencyTrace
from .config import ServiceConfig, redacted_dict
from .errors import PipelineError
from .maskops import rle_decode
from .model import Label, Mitigation, ScenePair, Verdict, validate_scene_pair
from .obstruction import ObstructionReport, detect_obstruction
from .storage import image_ref_from_png_bytes
from .vim import PROMPT_TEMPLATE_ID, VimReport, detect_vim

MAX_REQUEST_BYTES = 64 * 1024 * 1024

UNDETERMINED_CLOSED = "undetermined-treat-as-attacked"


class AnalysisService:
    """Embeddable service wrapper: start()/stop() around a threading server."""

    def __init__(self, config: ServiceConfig):
        config.validate()
        self.config = config
        self.pool = BackendPool(config.pipeline.endpoints)
        self._slots = threading.BoundedSemaphore(config.max_concurrent)
        host, port = config.host_port()
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        """Stop accepting, then drain in-flight handlers before returning."""
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join()
            self._thread = None

    def serve_forever(self) -> None:
        try:
            self._server.serve_forever()
        finally:
            self._server.server_close()

    # ---- request handling ---------------------------------------------------

    def analyze(self, kind: str, body: bytes) -> tuple[int, dict]:
        try:
            pair = self._parse_scene(body)
        except ValueError as exc:
            return 400, {"error": str(exc)}
        violations = validate_scene_pair(pair)
        if violations:
            return 400, {"error": "invalid scene pair", "violations": violations}
        run = detect_obstruction if kind == "obstruction" else detect_vim
        try:
            report = run(pair, self.config.pipeline, self.pool)
        except PipelineError as exc:
            return 200, self._failure_report(kind, pair.id, exc)
        payload = report.to_dict()
        payload["fail_policy"] = self.config.fail_policy
        return 200, payload

    def _parse_scene(self, body: bytes) -> ScenePair:
        try:
            data = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ValueError(f"request body is not JSON: {exc.msg}") from None
        request_id = "req-" + hashlib.sha256(body).hexdigest()[:12]
        try:
            raw = image_ref_from_png_bytes(
                f"{request_id}/raw", base64.b64decode(data["raw"]["png_base64"])
            )
            ar = image_ref_from_png_bytes(
                f"{request_id}/ar", base64.b64decode(data["ar"]["png_base64"])
            )
            content = rle_decode(data["content_mask"]["rle"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"request missing field: {exc}") from None
        except Exception as exc:
            raise ValueError(f"cannot decode request images/mask: {exc}") from None
        return ScenePair(id=request_id, raw=raw, ar=ar, content_mask=content, truth=None)

    def _failure_report(self, kind: str, scene_id: str, exc: PipelineError) -> dict:
        attack_kind = Label.OBSTRUCTION if kind == "obstruction" else Label.VIM
        if self.config.fail_policy == "fail_closed":
            verdict = Verdict(
                True,
                attack_kind,
                0.0,
                Mitigation.MAKE_TRANSLUCENT,
                f"{UNDETERMINED_CLOSED}: stage '{exc.stage}' failed",
            )
        else:
            verdict = Verdict(
                False, Label.NONE, 0.0, Mitigation.NONE,
                f"undetermined: stage '{exc.stage}' failed (fail_open)",
            )
        empty_trace = LatencyTrace()
        if kind == "obstruction":
            report = ObstructionReport(scene_id, (), verdict, empty_trace).to_dict()
        else:
            from .vim import TokenDiff

            diff = TokenDiff((), (), ())
            report = VimReport(
                scene_id, diff, "", PROMPT_TEMPLATE_ID, verdict, None, empty_trace
            ).to_dict()
        report["failure"] = {"stage": exc.stage, "error": str(exc.cause)}
        report["fail_policy"] = self.config.fail_policy
        return report

    def config_payload(self) -> dict:
        return {
            "listen": self.config.listen,
            "fail_policy": self.config.fail_policy,
            "max_concurrent": self.config.max_concurrent,
            "request_timeout_ms": self.config.request_timeout_ms,
            "pipeline": redacted_dict(self.config.pipeline),
        }


def _make_handler(service: AnalysisService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "arsent"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/v1/health":
                self._send(200, {"status": "ok"})
            elif self.path == "/v1/config":
                self._send(200, service.config_payload())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path not in ("/v1/analyze/obstruction", "/v1/analyze/vim"):
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            length = int(self.headers.get("Content-Length", 0))
            if length > MAX_REQUEST_BYTES:
                self._send(413, {"error": "request too large"})
                return
            if not service._slots.acquire(blocking=False):
                self._send(429, {"error": "over capacity"})
                return
            try:
                body = self.rfile.read(length)
                kind = self.path.rsplit("/", 1)[-1]
                status, payload = service.analyze(kind, body)
            except Exception as exc:  # defensive: a handler crash must answer
                status, payload = 500, {"error": f"internal error: {exc}"}
            finally:
                service._slots.release()
            self._send(status, payload)

    return Handler


def serve(config: ServiceConfig) -> None:
    """Run until SIGINT/SIGTERM; finishes in-flight requests before exiting."""
    import signal

    service = AnalysisService(config)

    def _stop(signum, frame):
        threading.Thread(target=service._server.shutdown).start()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    service.serve_forever()
