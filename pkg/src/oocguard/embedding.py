"""Embedding cache, cosine similarity, and the batch embedding gateway.

Vectors are float32 rows stored un-normalized; cosine normalizes on the fly
and accumulates in double precision. The on-disk cache is a compact binary
file:

    magic "EMB1" | u32 LE dim | repeated [u16 LE id-length, id (UTF-8),
    dim x f32 LE]

Readers reject anything that is not exactly that: wrong magic, truncated
records, trailing bytes, duplicate ids.

Cache keys: evidence items use their manifest id directly; claims own two
vectors each, keyed `<claim_id>#caption` and `<claim_id>#image`.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import Corpus, Modality
from .errors import (
    BackendUnavailableError,
    CacheFormatError,
    DimensionMismatchError,
    EmbeddingError,
    MissingEmbeddingError,
    ZeroNormError,
)

logger = logging.getLogger(__name__)

MAGIC = b"EMB1"


def caption_key(claim_id: str) -> str:
    return f"{claim_id}#caption"


def image_key(claim_id: str) -> str:
    return f"{claim_id}#image"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity with float64 accumulation.

    Inputs may be float32; dot products and norms are taken in double
    precision so stored precision never leaks into comparisons.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise EmbeddingError("cosine expects 1-d vectors")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("zero-norm vector has no direction")
    return float(np.dot(a, b) / (norm_a * norm_b))


def _validate_vector(item_id: str, vec: np.ndarray, dim: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float32).reshape(-1)
    if vec.shape[0] != dim:
        raise DimensionMismatchError(
            f"vector for {item_id!r} has dim {vec.shape[0]}, cache dim is {dim}"
        )
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError(f"vector for {item_id!r} contains non-finite values")
    if not np.any(vec):
        raise ZeroNormError(f"vector for {item_id!r} is all-zero (backend failure)")
    return vec


class EmbeddingCache:
    """In-memory id -> vector map with the binary file format behind it."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise EmbeddingError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._vectors: dict[str, np.ndarray] = {}

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> list[str]:
        return list(self._vectors)

    def get(self, item_id: str) -> np.ndarray:
        try:
            return self._vectors[item_id]
        except KeyError:
            raise MissingEmbeddingError(f"no vector cached for {item_id!r}") from None

    def put(self, item_id: str, vec: np.ndarray) -> None:
        """Insert one vector; zero-norm or wrong-dim vectors are rejected here."""
        self._vectors[item_id] = _validate_vector(item_id, vec, self.dim)

    def save(self, path: str | Path) -> Path:
        """Write the binary cache; entries in insertion order."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<I", self.dim))
            for item_id, vec in self._vectors.items():
                encoded = item_id.encode("utf-8")
                if len(encoded) > 0xFFFF:
                    raise EmbeddingError(f"id too long for cache format: {item_id[:40]!r}...")
                handle.write(struct.pack("<H", len(encoded)))
                handle.write(encoded)
                handle.write(vec.astype("<f4").tobytes())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingCache":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:4] != MAGIC:
            raise CacheFormatError(f"{path}: bad magic, not an embedding cache")
        if len(blob) < 8:
            raise CacheFormatError(f"{path}: truncated header")
        (dim,) = struct.unpack_from("<I", blob, 4)
        if dim == 0:
            raise CacheFormatError(f"{path}: dim must be positive")
        cache = cls(dim)
        offset = 8
        record_tail = 4 * dim
        total = len(blob)
        while offset < total:
            if offset + 2 > total:
                raise CacheFormatError(f"{path}: trailing garbage at byte {offset}")
            (id_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            if offset + id_len + record_tail > total:
                raise CacheFormatError(f"{path}: trailing garbage at byte {offset - 2}")
            item_id = blob[offset : offset + id_len].decode("utf-8")
            offset += id_len
            vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
            offset += record_tail
            if item_id in cache:
                raise CacheFormatError(f"{path}: duplicate id {item_id!r}")
            cache.put(item_id, vec)
        return cache


class EmbeddingBackend(Protocol):
    """Anything that turns batches of texts / image refs into vectors."""

    dim: int

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...

    def embed_images(self, refs: Sequence[str]) -> np.ndarray: ...


class EmbeddingStore:
    """Read path used by strategies/detector: cache first, backend optional.

    With no backend attached this is the pure file-cache mode: a miss is a
    MissingEmbeddingError instead of a network call.
    """

    def __init__(self, cache: EmbeddingCache, backend: EmbeddingBackend | None = None):
        if backend is not None and backend.dim != cache.dim:
            raise DimensionMismatchError(
                f"backend dim {backend.dim} != cache dim {cache.dim}"
            )
        self.cache = cache
        self.backend = backend

    @property
    def dim(self) -> int:
        return self.cache.dim

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.cache

    def get(self, item_id: str) -> np.ndarray:
        return self.cache.get(item_id)

    def embed_text(self, item_id: str, text: str) -> np.ndarray:
        """Vector for a text item; served from cache byte-identically when present."""
        if item_id in self.cache:
            return self.cache.get(item_id)
        if not text:
            raise EmbeddingError(f"empty text for {item_id!r}")
        if self.backend is None:
            raise BackendUnavailableError(f"no backend attached and {item_id!r} not cached")
        vec = self.backend.embed_texts([text])[0]
        self.cache.put(item_id, vec)
        return self.cache.get(item_id)

    def embed_image(self, item_id: str, ref: str) -> np.ndarray:
        if item_id in self.cache:
            return self.cache.get(item_id)
        if not ref:
            raise EmbeddingError(f"empty image reference for {item_id!r}")
        if self.backend is None:
            raise BackendUnavailableError(f"no backend attached and {item_id!r} not cached")
        vec = self.backend.embed_images([ref])[0]
        self.cache.put(item_id, vec)
        return self.cache.get(item_id)


@dataclass
class EmbedReport:
    """Outcome of a batch embedding run."""

    total: int = 0
    embedded: int = 0
    skipped_existing: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def covered(self) -> int:
        return self.embedded + self.skipped_existing

    @property
    def coverage(self) -> float:
        return self.covered / self.total if self.total else 1.0


def _embed_tasks(corpus: Corpus) -> list[tuple[str, Modality, str]]:
    """(cache key, modality, content) for every embeddable item, in corpus order."""
    tasks: list[tuple[str, Modality, str]] = []
    for claim in corpus.claims:
        tasks.append((caption_key(claim.id), Modality.TEXT, claim.caption))
        tasks.append((image_key(claim.id), Modality.IMAGE, claim.image_ref))
    for item in corpus.evidence:
        tasks.append((item.id, item.modality, item.content))
    return tasks


def batch_embed(
    corpus: Corpus,
    backend: EmbeddingBackend,
    cache_path: str | Path,
    jobs: int = 1,
) -> tuple[EmbeddingCache, EmbedReport]:
    """Embed every claim caption, claim image, and evidence item into a cache file.

    Idempotent: an existing cache at cache_path is extended, present ids are
    skipped, and a rerun over a complete cache issues zero backend calls.
    Per-item failures are recorded and the run continues; the final file
    content does not depend on completion order (ids are written in corpus
    order on every run).
    """
    cache_path = Path(cache_path)
    if cache_path.exists():
        cache = EmbeddingCache.load(cache_path)
        try:
            if cache.dim != backend.dim:
                raise DimensionMismatchError(
                    f"existing cache dim {cache.dim} != backend dim {backend.dim}"
                )
        except BackendUnavailableError:
            pass  # dim probe failed: per-item calls below record the failures
    else:
        cache = EmbeddingCache(backend.dim)

    tasks = _embed_tasks(corpus)
    report = EmbedReport(total=len(tasks))
    pending: list[tuple[str, Modality, str]] = []
    seen: set[str] = set()
    for key, modality, content in tasks:
        if key in seen:
            continue
        seen.add(key)
        if key in cache:
            report.skipped_existing += 1
        else:
            pending.append((key, modality, content))

    def run_one(task: tuple[str, Modality, str]) -> tuple[str, np.ndarray | None, str | None]:
        key, modality, content = task
        try:
            if not content:
                raise EmbeddingError("empty content")
            if modality is Modality.TEXT:
                vec = backend.embed_texts([content])[0]
            else:
                vec = backend.embed_images([content])[0]
            return key, vec, None
        except Exception as exc:  # failures recorded, run continues
            return key, None, str(exc)

    jobs = max(1, int(jobs))
    if jobs == 1 or len(pending) <= 1:
        results = [run_one(task) for task in pending]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, pending))

    # single writer: results land in the cache in request order
    for key, vec, error in results:
        if error is not None:
            report.failures.append((key, error))
            logger.warning("embedding failed for %s: %s", key, error)
            continue
        try:
            cache.put(key, vec)
            report.embedded += 1
        except EmbeddingError as exc:
            report.failures.append((key, str(exc)))
            logger.warning("embedding rejected for %s: %s", key, exc)

    ordered = EmbeddingCache(cache.dim)
    for key, _, _ in tasks:
        if key in cache and key not in ordered:
            ordered.put(key, cache.get(key))
    # keep entries that belong to other corpora sharing the cache file
    for key in cache.ids():
        if key not in ordered:
            ordered.put(key, cache.get(key))
    ordered.save(cache_path)
    return ordered, report
