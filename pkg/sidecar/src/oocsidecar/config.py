from __future__ import annotations

from dataclasses import dataclass

DEFAULT_TEMPERATURE = 1.2
DEFAULT_MAX_TOKENS = 64
DEFAULT_TOP_P = 0.95


@dataclass(frozen=True)
class SidecarConfig:
    """Process-level settings. The embedding dim never changes once serving."""

    embed_model: str = "hash-projector"
    text_model: str = "template-lm"
    image_model: str = "pixel-jitter"
    dim: int = 256
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    top_p: float = DEFAULT_TOP_P
    host: str = "127.0.0.1"
    port: int = 8099
    max_batch: int = 256

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
