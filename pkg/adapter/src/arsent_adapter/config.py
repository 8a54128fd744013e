"""Adapter configuration; credentials and model identifiers resolve at startup."""

from __future__ import annotations

from dataclasses import dataclass, field

KINDS = ("keyobjects", "detect", "segment", "ocr", "verdict")


@dataclass(frozen=True)
class AdapterConfig:
    listen: str = "127.0.0.1:8900"
    engines: dict = field(default_factory=lambda: {k: "classical" for k in KINDS})
    device: str = "cpu"
    pool_size: int = 2
    binarize_threshold: float = 0.5  # applied to soft masks before RLE encoding
    api_key_env: str = "ARSENT_VLM_API_KEY"
    vlm_base_url: str = "https://api.openai.com/v1"
    vlm_model: str = "gpt-4o"
    record_dir: str | None = None
    replay_dir: str | None = None

    def validate(self) -> None:
        if self.pool_size < 1:
            raise ValueError("pool_size must be at least 1")
        if not (0.0 < self.binarize_threshold < 1.0):
            raise ValueError("binarize_threshold must be in (0, 1)")
        if self.record_dir and self.replay_dir:
            raise ValueError("record and replay modes are mutually exclusive")
        missing = [k for k in KINDS if k not in self.engines]
        if missing:
            raise ValueError(f"engines not configured for: {', '.join(missing)}")

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)
