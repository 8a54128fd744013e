"""Exception types shared across the engine."""

from __future__ import annotations


class ArsentError(Exception):
    """Base class for engine errors."""


class ConfigError(ArsentError):
    """Invalid configuration value, detected at load/startup time."""


class BackendError(ArsentError):
    """Base class for model-backend failures."""


class BackendTimeout(BackendError):
    """A backend call exceeded its configured timeout."""

    def __init__(self, message: str, elapsed_ms: float):
        super().__init__(message)
        self.elapsed_ms = elapsed_ms


class ProtocolError(BackendError):
    """A backend returned a malformed or contract-violating response."""

    def __init__(self, message: str, payload_excerpt: str = ""):
        if payload_excerpt:
            message = f"{message}; payload: {payload_excerpt[:200]}"
        super().__init__(message)
        self.payload_excerpt = payload_excerpt[:200]


class PipelineError(ArsentError):
    """A pipeline stage failed; carries the stage name for fail-policy handling."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
