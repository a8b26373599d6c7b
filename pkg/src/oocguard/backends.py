"""Embedding backends: deterministic local mock and the remote sidecar client.

The hash backend exists so the whole pipeline runs offline and reproducibly;
it never touches the filesystem (image refs are hashed as opaque content
ids). The remote backend speaks the sidecar wire protocol and resolves image
refs to real bytes before shipping them.
"""

from __future__ import annotations

import base64
import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import BackendUnavailableError, EmbeddingError, UnresolvedReferenceError

DEFAULT_TIMEOUT = 30.0


def _hash_seed(namespace: str, content: str, salt: int) -> int:
    digest = hashlib.sha256(f"{namespace}|{salt}|{content}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class HashEmbeddingBackend:
    """Deterministic pseudo-embeddings derived from content hashes.

    Same string always maps to the same unit-scale gaussian vector; text and
    image namespaces are kept apart so a ref equal to some caption does not
    collide. No similarity structure is implied, which is exactly what the
    deterministic tests want.
    """

    def __init__(self, dim: int = 32, salt: int = 0):
        if dim <= 0:
            raise EmbeddingError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self.salt = int(salt)
        self.calls = 0

    def _vector(self, namespace: str, content: str) -> np.ndarray:
        rng = np.random.default_rng(_hash_seed(namespace, content, self.salt))
        return rng.standard_normal(self.dim).astype(np.float32)

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        self.calls += 1
        return np.stack([self._vector("text", t) for t in texts])

    def embed_images(self, refs: Sequence[str]) -> np.ndarray:
        self.calls += 1
        return np.stack([self._vector("image", r) for r in refs])


def resolve_image_ref(ref: str, images_root: str | Path | None) -> Path:
    """Map a manifest image reference to a readable file."""
    candidate = Path(ref)
    if not candidate.is_absolute() and images_root is not None:
        candidate = Path(images_root) / candidate
    if not candidate.is_file():
        raise UnresolvedReferenceError(f"image reference {ref!r} does not resolve to a file")
    return candidate


class RemoteEmbeddingBackend:
    """Client for the sidecar's embedding endpoints.

    The vector dimension is probed once from /v1/health; image refs are
    resolved against images_root and sent base64-encoded.
    """

    def __init__(
        self,
        endpoint: str,
        images_root: str | Path | None = None,
        batch_size: int = 128,
        timeout: float = DEFAULT_TIMEOUT,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.images_root = images_root
        self.batch_size = max(1, int(batch_size))
        self.timeout = timeout
        self._session = session or requests.Session()
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            try:
                resp = self._session.get(f"{self.endpoint}/v1/health", timeout=self.timeout)
            except requests.RequestException as exc:
                raise BackendUnavailableError(f"backend unreachable: {exc}") from None
            if resp.status_code != 200:
                raise BackendUnavailableError(
                    f"backend not ready: health returned {resp.status_code}"
                )
            self._dim = int(resp.json()["dim"])
        return self._dim

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._session.post(
                f"{self.endpoint}{path}", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"backend unreachable: {exc}") from None
        if resp.status_code != 200:
            detail = resp.text[:200]
            raise EmbeddingError(f"{path} returned {resp.status_code}: {detail}")
        return resp.json()

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            chunk = list(texts[start : start + self.batch_size])
            body = self._post("/v1/embed/text", {"texts": chunk})
            if int(body["dim"]) != self.dim:
                raise EmbeddingError(
                    f"backend returned dim {body['dim']}, expected {self.dim}"
                )
            rows.extend(body["vectors"])
        return np.asarray(rows, dtype=np.float32)

    def embed_images(self, refs: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for ref in refs:
            path = resolve_image_ref(ref, self.images_root)
            payload = base64.b64encode(path.read_bytes()).decode("ascii")
            body = self._post("/v1/embed/image", {"image_b64": payload})
            if int(body["dim"]) != self.dim:
                raise EmbeddingError(
                    f"backend returned dim {body['dim']}, expected {self.dim}"
                )
            rows.append(body["vector"])
        return np.asarray(rows, dtype=np.float32)
