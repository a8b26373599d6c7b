"""FastAPI app exposing the five pipeline-facing endpoints.

Request bodies are parsed by hand instead of through response-model
validation so every malformed input maps to a plain 400 (the pipeline
client treats anything but 200 as a backend fault; 422 semantics would
leak an implementation detail). No handler mutates server state.
"""

from __future__ import annotations

import base64
import binascii
import logging

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .config import SidecarConfig
from .models import (
    TEXT_KINDS,
    DecodingParams,
    ModelBundle,
    UpstreamError,
    build_models,
    build_prompt,
)

logger = logging.getLogger("oocsidecar.generate")


async def _json_body(request: Request) -> dict:
    try:
        payload = await request.json()
    except Exception:
        raise HTTPException(400, "request body must be valid JSON") from None
    if not isinstance(payload, dict):
        raise HTTPException(400, "request body must be a JSON object")
    return payload


def _b64_field(payload: dict, field: str) -> bytes:
    raw = payload.get(field)
    if not isinstance(raw, str) or not raw:
        raise HTTPException(400, f"{field} must be a non-empty base64 string")
    try:
        return base64.b64decode(raw, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(400, f"{field} is not valid base64") from None


def _decoding_params(payload: dict, config: SidecarConfig) -> DecodingParams:
    def number(field, default, lo=None):
        value = payload.get(field, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise HTTPException(400, f"{field} must be a number")
        if lo is not None and value <= lo:
            raise HTTPException(400, f"{field} must be > {lo}")
        return value

    max_tokens = payload.get("max_tokens", config.max_tokens)
    if isinstance(max_tokens, bool) or not isinstance(max_tokens, int) or max_tokens < 1:
        raise HTTPException(400, "max_tokens must be a positive integer")
    top_p = number("top_p", config.top_p, lo=0)
    if top_p > 1:
        raise HTTPException(400, "top_p must be in (0, 1]")
    return DecodingParams(
        temperature=float(number("temperature", config.temperature, lo=0)),
        max_tokens=max_tokens,
        top_p=float(top_p),
    )


def _seed_field(payload: dict) -> int:
    seed = payload.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise HTTPException(400, "seed must be an integer")
    return seed


def create_app(
    config: SidecarConfig | None = None,
    bundle: ModelBundle | None = None,
    defer_load: bool = False,
) -> FastAPI:
    """Build the service; models load eagerly unless defer_load is set.

    A prebuilt bundle overrides the registry lookup (tests inject failing
    models that way). With defer_load the app starts with nothing loaded
    and every endpoint answers 503.
    """
    config = config or SidecarConfig()
    app = FastAPI(title="oocsidecar", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.bundle = None if defer_load else (bundle or build_models(config))

    def models() -> ModelBundle:
        loaded = app.state.bundle
        if loaded is None:
            raise HTTPException(503, "models not loaded")
        return loaded

    @app.get("/v1/health")
    async def health():
        loaded = app.state.bundle
        if loaded is None:
            return JSONResponse({"status": "unavailable"}, status_code=503)
        return {
            "status": "ok",
            "dim": loaded.embedder.dim,
            "models": {
                "embedding": loaded.embedder.identifier,
                "text": loaded.text_model.identifier,
                "image": loaded.image_model.identifier,
            },
        }

    @app.post("/v1/embed/text")
    async def embed_text(request: Request):
        bundle = models()
        payload = await _json_body(request)
        texts = payload.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise HTTPException(400, "texts must be a list of strings")
        if not texts:
            raise HTTPException(400, "empty batch")
        if len(texts) > config.max_batch:
            raise HTTPException(413, f"batch of {len(texts)} exceeds max {config.max_batch}")
        return {"dim": bundle.embedder.dim, "vectors": bundle.embedder.encode_texts(texts)}

    @app.post("/v1/embed/image")
    async def embed_image(request: Request):
        bundle = models()
        payload = await _json_body(request)
        data = _b64_field(payload, "image_b64")
        try:
            vector = bundle.embedder.encode_image(data)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from None
        return {"dim": bundle.embedder.dim, "vector": vector}

    @app.post("/v1/generate/text")
    async def generate_text(request: Request):
        bundle = models()
        payload = await _json_body(request)
        caption = payload.get("caption")
        if not isinstance(caption, str) or not caption:
            raise HTTPException(400, "caption must be a non-empty string")
        kind = payload.get("kind")
        if kind not in TEXT_KINDS:
            raise HTTPException(400, f"kind must be one of {list(TEXT_KINDS)}")
        seed = _seed_field(payload)
        params = _decoding_params(payload, config)
        prompt = build_prompt(caption, kind)
        logger.info("text generation kind=%s prompt: %s", kind, prompt)
        try:
            text = bundle.text_model.generate(prompt, seed, params)
        except UpstreamError as exc:
            return JSONResponse(
                {"detail": f"text model failed: {exc}"},
                status_code=502,
                headers={"Retry-After": "1"},
            )
        return {"text": text}

    @app.post("/v1/generate/image")
    async def generate_image(request: Request):
        bundle = models()
        payload = await _json_body(request)
        data = _b64_field(payload, "image_b64")
        seed = _seed_field(payload)
        prompt = payload.get("prompt", "")
        if not isinstance(prompt, str):
            raise HTTPException(400, "prompt must be a string")
        try:
            blob = bundle.image_model.generate(data, seed, prompt)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from None
        except UpstreamError as exc:
            return JSONResponse(
                {"detail": f"image model failed: {exc}"},
                status_code=502,
                headers={"Retry-After": "1"},
            )
        return {"image_b64": base64.b64encode(blob).decode("ascii")}

    return app
