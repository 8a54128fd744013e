"""Pipeline and service configuration: JSON files plus ARSENT_* env overrides.

Endpoint shorthand: `"endpoints": {"all": "oracle:dataset"}` expands to all
five backend kinds with their default tiers; individual kinds may then be
overridden with full endpoint objects.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

from .backend import KINDS, BackendEndpoint
from .errors import ConfigError
from .maskops import DEFAULT_THRESHOLD
from .model import DEFAULT_VIM_FORMATS, DEFAULT_VIM_PURPOSES

ENV_PREFIX = "ARSENT_"


@dataclass(frozen=True)
class PipelineConfig:
    threshold: float = DEFAULT_THRESHOLD
    max_key_objects: int = 8
    min_detection_score: float = 0.25
    pairing_radius_px: float = 24.0  # at 640x480; scaled with image diagonal
    default_purpose: str = "misinformation"
    extra_formats: tuple = ()
    extra_purposes: tuple = ()
    scene_context: Optional[str] = None
    endpoints: Mapping[str, BackendEndpoint] = field(default_factory=dict)

    def validate(self) -> None:
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.max_key_objects < 1:
            raise ConfigError("max_key_objects must be at least 1")
        if not (0.0 <= self.min_detection_score <= 1.0):
            raise ConfigError("min_detection_score must be in [0, 1]")
        if self.pairing_radius_px <= 0:
            raise ConfigError("pairing_radius_px must be positive")
        missing = [k for k in KINDS if k not in self.endpoints]
        if missing:
            raise ConfigError(f"missing backend endpoints: {', '.join(missing)}")

    @property
    def vim_formats(self) -> tuple:
        return DEFAULT_VIM_FORMATS + self.extra_formats

    @property
    def vim_purposes(self) -> tuple:
        return DEFAULT_VIM_PURPOSES + self.extra_purposes


@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    fail_policy: str = "fail_closed"
    max_concurrent: int = 8
    request_timeout_ms: int = 30_000

    def validate(self) -> None:
        self.pipeline.validate()
        if self.fail_policy not in ("fail_closed", "fail_open"):
            raise ConfigError(f"fail_policy must be fail_closed or fail_open, got {self.fail_policy}")
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be at least 1")
        largest = max(ep.timeout_ms for ep in self.pipeline.endpoints.values())
        if self.request_timeout_ms < largest:
            raise ConfigError(
                f"request_timeout_ms {self.request_timeout_ms} is below the largest"
                f" backend timeout {largest}"
            )

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        try:
            return host or "127.0.0.1", int(port)
        except ValueError:
            raise ConfigError(f"listen address must be host:port, got {self.listen}") from None


def endpoints_from_dict(spec: Mapping) -> dict[str, BackendEndpoint]:
    expanded: dict[str, dict] = {}
    if "all" in spec:
        base = spec["all"]
        base = {"locator": base} if isinstance(base, str) else dict(base)
        for kind in KINDS:
            expanded[kind] = dict(base)
    for kind, value in spec.items():
        if kind == "all":
            continue
        if kind not in KINDS:
            raise ConfigError(f"unknown backend kind in endpoints: {kind}")
        expanded[kind] = {"locator": value} if isinstance(value, str) else dict(value)
    out = {}
    for kind, cfg in expanded.items():
        if "locator" not in cfg:
            raise ConfigError(f"endpoint {kind}: locator is required")
        out[kind] = BackendEndpoint(
            kind=kind,
            locator=cfg["locator"],
            timeout_ms=int(cfg.get("timeout_ms", 10_000)),
            tier=cfg.get("tier", ""),
            token=cfg.get("token"),
            retries=int(cfg.get("retries", 0)),
        )
    return out


def pipeline_config_from_dict(data: Mapping) -> PipelineConfig:
    cfg = PipelineConfig(
        threshold=float(data.get("threshold", DEFAULT_THRESHOLD)),
        max_key_objects=int(data.get("max_key_objects", 8)),
        min_detection_score=float(data.get("min_detection_score", 0.25)),
        pairing_radius_px=float(data.get("pairing_radius_px", 24.0)),
        default_purpose=data.get("default_purpose", "misinformation"),
        extra_formats=tuple(data.get("extra_formats", ())),
        extra_purposes=tuple(data.get("extra_purposes", ())),
        scene_context=data.get("scene_context"),
        endpoints=endpoints_from_dict(data.get("endpoints", {})),
    )
    cfg.validate()
    return cfg


_PIPELINE_ENV = {
    "THRESHOLD": ("threshold", float),
    "MAX_KEY_OBJECTS": ("max_key_objects", int),
    "MIN_DETECTION_SCORE": ("min_detection_score", float),
    "PAIRING_RADIUS_PX": ("pairing_radius_px", float),
    "DEFAULT_PURPOSE": ("default_purpose", str),
}
_SERVICE_ENV = {
    "LISTEN": ("listen", str),
    "FAIL_POLICY": ("fail_policy", str),
    "MAX_CONCURRENT": ("max_concurrent", int),
    "REQUEST_TIMEOUT_MS": ("request_timeout_ms", int),
}


def _apply_env(obj, table, environ):
    updates = {}
    for env_key, (attr, cast) in table.items():
        raw = environ.get(ENV_PREFIX + env_key)
        if raw is not None:
            try:
                updates[attr] = cast(raw)
            except ValueError:
                raise ConfigError(f"env {ENV_PREFIX + env_key}: cannot parse {raw!r}") from None
    return replace(obj, **updates) if updates else obj


def load_pipeline_config(path, environ=os.environ) -> PipelineConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = pipeline_config_from_dict(data)
    cfg = _apply_env(cfg, _PIPELINE_ENV, environ)
    cfg.validate()
    return cfg


def load_service_config(path, environ=os.environ) -> ServiceConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    pipeline = pipeline_config_from_dict(data.get("pipeline", data))
    pipeline = _apply_env(pipeline, _PIPELINE_ENV, environ)
    cfg = ServiceConfig(
        listen=data.get("listen", "127.0.0.1:8080"),
        pipeline=pipeline,
        fail_policy=data.get("fail_policy", "fail_closed"),
        max_concurrent=int(data.get("max_concurrent", 8)),
        request_timeout_ms=int(data.get("request_timeout_ms", 30_000)),
    )
    cfg = _apply_env(cfg, _SERVICE_ENV, environ)
    cfg.validate()
    return cfg


def redacted_dict(cfg: PipelineConfig) -> dict:
    """Config as JSON-safe dict with credentials stripped; used by /v1/config
    and as the fingerprint body."""
    return {
        "threshold": cfg.threshold,
        "max_key_objects": cfg.max_key_objects,
        "min_detection_score": cfg.min_detection_score,
        "pairing_radius_px": cfg.pairing_radius_px,
        "default_purpose": cfg.default_purpose,
        "extra_formats": list(cfg.extra_formats),
        "extra_purposes": list(cfg.extra_purposes),
        "scene_context": cfg.scene_context,
        "endpoints": {
            kind: {
                "locator": ep.locator,
                "timeout_ms": ep.timeout_ms,
                "tier": ep.tier,
                "token": "***" if ep.token else None,
            }
            for kind, ep in sorted(cfg.endpoints.items())
        },
    }


def config_fingerprint(cfg: PipelineConfig) -> str:
    """Stable hash binding every report to the configuration that produced it."""
    body = json.dumps(redacted_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode()).hexdigest()[:16]
