"""HTTP server exposing the backend wire protocol over the configured engines.

Engines run request-serial per instance (heavyweight models are not
reentrant); protocol-level concurrency comes from a fixed pool of instances.

Record mode writes every (request, response) pair to disk keyed by the
request hash; replay mode serves those bodies byte-for-byte without touching
any engine, which gives the detection engine an offline, bit-stable stand-in
for live models.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import KINDS, AdapterConfig
from .engines import EngineStartupError, build_engine
from .imaging import decode_png_base64

PATHS = {f"/v1/{kind}": kind for kind in KINDS}


class _EnginePool:
    """Fixed set of engine instances checked out one request at a time."""

    def __init__(self, name: str, config: AdapterConfig, size: int):
        self._q: queue.Queue = queue.Queue()
        for _ in range(size):
            self._q.put(build_engine(name, config))

    @contextmanager
    def checkout(self):
        inst = self._q.get()
        try:
            yield inst
        finally:
            self._q.put(inst)


class RecordStore:
    """Byte-exact request/response capture, one JSON file per request hash."""

    def __init__(self, root: Path, writable: bool):
        self.root = Path(root)
        self.writable = writable
        if writable:
            self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(path: str, body: bytes) -> str:
        return hashlib.sha256(path.encode() + b"\0" + body).hexdigest()

    def save(self, path: str, body: bytes, status: int, response: bytes) -> None:
        entry = {
            "path": path,
            "request_sha256": hashlib.sha256(body).hexdigest(),
            "request_b64": base64.b64encode(body).decode("ascii"),
            "status": status,
            "response_b64": base64.b64encode(response).decode("ascii"),
        }
        name = self.key(path, body) + ".json"
        with self._lock:
            (self.root / name).write_text(json.dumps(entry, indent=1), encoding="utf-8")

    def load(self, path: str, body: bytes) -> tuple[int, bytes] | None:
        f = self.root / (self.key(path, body) + ".json")
        if not f.exists():
            return None
        entry = json.loads(f.read_text(encoding="utf-8"))
        return int(entry["status"]), base64.b64decode(entry["response_b64"])


class AdapterServer:
    """Embeddable adapter: start()/stop() around a threading HTTP server."""

    def __init__(self, config: AdapterConfig):
        config.validate()
        self.config = config
        self.replaying = config.replay_dir is not None
        self.store: RecordStore | None = None
        if config.record_dir:
            self.store = RecordStore(Path(config.record_dir), writable=True)
        elif config.replay_dir:
            root = Path(config.replay_dir)
            if not root.is_dir():
                raise EngineStartupError(f"replay directory not found: {root}")
            self.store = RecordStore(root, writable=False)

        self._pools: dict[str, _EnginePool] = {}
        if not self.replaying:
            # one pool per distinct engine name; kinds sharing an engine share it
            by_name: dict[str, _EnginePool] = {}
            for kind in KINDS:
                name = config.engines[kind]
                if name not in by_name:
                    by_name[name] = _EnginePool(name, config, config.pool_size)
                engine_cls_kinds = _probe_kinds(name, config)
                if kind not in engine_cls_kinds:
                    raise EngineStartupError(
                        f"engine {name!r} does not implement {kind!r}"
                        f" (supports {', '.join(engine_cls_kinds)})"
                    )
                self._pools[kind] = by_name[name]

        host, port = config.host_port()
        self._server = ThreadingHTTPServer((host, port), _make_handler(self))
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
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

    # ---- request handling -------------------------------------------------

    def handle(self, path: str, body: bytes) -> tuple[int, bytes]:
        if path not in PATHS:
            return 404, _err(f"unknown path {path}")
        if self.replaying:
            hit = self.store.load(path, body)
            if hit is None:
                return 409, _err("no recorded response for this request")
            return hit
        try:
            payload = json.loads(body)
        except ValueError:
            return 400, _err("request body is not JSON")
        try:
            status, response = self._dispatch(PATHS[path], payload)
        except (KeyError, TypeError, ValueError) as exc:
            status, response = 400, _err(f"bad request: {exc}")
        except Exception as exc:  # engine fault: protocol-conformant error body
            status, response = 500, _err(f"inference failure: {exc}")
        if self.store is not None and self.store.writable:
            self.store.save(path, body, status, response)
        return status, response

    def _dispatch(self, kind: str, payload: dict) -> tuple[int, bytes]:
        pool = self._pools[kind]
        if kind == "keyobjects":
            img = decode_png_base64(payload["image"]["png_base64"])
            with pool.checkout() as engine:
                out = {"objects": engine.keyobjects(img)}
        elif kind == "detect":
            img = decode_png_base64(payload["image"]["png_base64"])
            with pool.checkout() as engine:
                out = {"boxes": engine.detect(img, str(payload["query"]))}
        elif kind == "segment":
            img = decode_png_base64(payload["image"]["png_base64"])
            boxes = [
                {"x": int(b["x"]), "y": int(b["y"]), "w": int(b["w"]), "h": int(b["h"])}
                for b in payload["boxes"]
            ]
            with pool.checkout() as engine:
                out = {"masks": [{"rle": rle} for rle in engine.segment(img, boxes)]}
        elif kind == "ocr":
            img = decode_png_base64(payload["image"]["png_base64"])
            with pool.checkout() as engine:
                out = {"tokens": engine.ocr(img)}
        else:
            images = [decode_png_base64(i["png_base64"]) for i in payload["images"]]
            with pool.checkout() as engine:
                out = engine.verdict(str(payload["prompt"]), images)
        return 200, json.dumps(out).encode()


def _probe_kinds(name: str, config: AdapterConfig) -> tuple[str, ...]:
    from .engines import ENGINE_CLASSES

    cls = ENGINE_CLASSES.get(name)
    if cls is None:
        raise EngineStartupError(f"unknown engine: {name!r}")
    return cls.kinds


def _err(message: str) -> bytes:
    return json.dumps({"error": message}).encode()


def _make_handler(server: AdapterServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "arsent-adapter"

        def log_message(self, fmt, *args):
            pass

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            status, response = server.handle(self.path, body)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(response)))
            self.end_headers()
            self.wfile.write(response)

        def do_GET(self):
            if self.path == "/v1/health":
                body = json.dumps(
                    {"status": "ok", "mode": "replay" if server.replaying else "live"}
                ).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            else:
                self.send_response(404)
                self.send_header("Content-Length", "0")
                self.end_headers()

    return Handler


def serve_adapter(config: AdapterConfig) -> None:
    """Run until SIGINT/SIGTERM; validates engines before binding."""
    import signal

    server = AdapterServer(config)

    def _stop(signum, frame):
        threading.Thread(target=server._server.shutdown).start()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    server.serve_forever()
