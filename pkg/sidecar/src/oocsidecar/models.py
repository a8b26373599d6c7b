"""Local model implementations behind the serving endpoints.

These are deterministic stand-ins with the same call surface a real
encoder/LM/diffusion wrapper would have: swap the registry entry and the
HTTP layer stays untouched. Determinism is a feature here — the pipeline's
caches and tests rely on fixed outputs for fixed inputs.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

# Wire-protocol prompt templates; the pipeline client builds the identical
# strings, and the contract tests pin them verbatim.
ENTITY_PROMPT = "Write a short text about the main entity mentioned in the caption. Caption: <INPUT>"
SUPPORT_REFUTE_PROMPT = "Write a piece of evidence to support or refute the given caption. Caption: <INPUT>"
PROMPT_SLOT = "<INPUT>"

TEXT_KINDS = ("entity", "support", "refute")


class UpstreamError(Exception):
    """A wrapped model failed; the HTTP layer maps this to 502."""


def build_prompt(caption: str, kind: str) -> str:
    if kind == "entity":
        template = ENTITY_PROMPT
    elif kind in ("support", "refute"):
        template = SUPPORT_REFUTE_PROMPT
    else:
        raise ValueError(f"no prompt for kind {kind!r}")
    return template.replace(PROMPT_SLOT, caption)


def _seed_from(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _decode_image(data: bytes) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValueError(f"payload does not decode as an image: {exc}") from None
    return image


class HashProjectorEmbedder:
    """Joint-space pseudo-encoder: content hash seeds a gaussian projection.

    Text and image payloads land in the same dim; identical payloads give
    identical vectors. Carries no semantics, exists for plumbing.
    """

    identifier = "hash-projector"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def _vector(self, namespace: str, key: bytes) -> list[float]:
        rng = np.random.default_rng(_seed_from(namespace, key.hex()))
        return rng.standard_normal(self.dim).astype(np.float32).tolist()

    def encode_texts(self, texts: list[str]) -> list[list[float]]:
        return [self._vector("text", t.encode("utf-8")) for t in texts]

    def encode_image(self, data: bytes) -> list[float]:
        _decode_image(data)  # undecodable payloads must fail, not embed
        return self._vector("image", data)


@dataclass(frozen=True)
class DecodingParams:
    temperature: float
    max_tokens: int
    top_p: float


_VOCAB = (
    "the report states that officials confirmed the scene near the site "
    "witnesses described crowds gathered during the event while local media "
    "published images showing people at the location on that day"
).split()


class TemplateLM:
    """Deterministic sampler over a tiny vocabulary.

    Output depends on prompt, seed, and every decoding parameter, and never
    exceeds max_tokens words, so the contract around decoding config is
    observable from outside.
    """

    identifier = "template-lm"

    def generate(self, prompt: str, seed: int, params: DecodingParams) -> str:
        rng = np.random.default_rng(
            _seed_from("lm", prompt, seed, params.temperature, params.top_p)
        )
        n_words = int(min(params.max_tokens, 12 + rng.integers(0, 9)))
        words = [_VOCAB[int(i)] for i in rng.integers(0, len(_VOCAB), size=n_words)]
        return " ".join(words) + "."


class PixelJitter:
    """Seeded per-pixel noise over the source image, re-encoded as PNG."""

    identifier = "pixel-jitter"

    def generate(self, data: bytes, seed: int, prompt: str = "") -> bytes:
        image = _decode_image(data).convert("RGB")
        pixels = np.asarray(image, dtype=np.int16)
        rng = np.random.default_rng(_seed_from("img", data.hex(), seed, prompt))
        noisy = np.clip(pixels + rng.integers(-16, 17, size=pixels.shape), 0, 255)
        out = io.BytesIO()
        Image.fromarray(noisy.astype(np.uint8)).save(out, format="PNG")
        return out.getvalue()


@dataclass
class ModelBundle:
    embedder: HashProjectorEmbedder
    text_model: TemplateLM
    image_model: PixelJitter


_EMBEDDERS = {"hash-projector": HashProjectorEmbedder}
_TEXT_MODELS = {"template-lm": TemplateLM}
_IMAGE_MODELS = {"pixel-jitter": PixelJitter}


def build_models(config) -> ModelBundle:
    """Instantiate the configured models; unknown identifiers fail startup."""
    for name, registry in (
        (config.embed_model, _EMBEDDERS),
        (config.text_model, _TEXT_MODELS),
        (config.image_model, _IMAGE_MODELS),
    ):
        if name not in registry:
            raise ValueError(f"unknown model {name!r}; available: {sorted(registry)}")
    return ModelBundle(
        embedder=_EMBEDDERS[config.embed_model](config.dim),
        text_model=_TEXT_MODELS[config.text_model](),
        image_model=_IMAGE_MODELS[config.image_model](),
    )
