"""Evidence pollution: prompt construction, generators, and corpus injection.

Text pollution is conditioned on the claim caption through two fixed
instruction templates (an entity description, and a single combined
support-or-refute instruction whose sampled intent is recorded as the item's
kind). Image pollution derives a variation from a clean evidence image.

Injection is the controlled experiment: floor(ratio * pool) generated items
per modality are drawn without replacement via a seeded prefix shuffle, so
the injected set at a lower ratio is always a subset of the set at a higher
ratio under the same seed. Injected items are placed ahead of clean ones in
the output manifest (pollution is crafted to look relevant; worst-case
placement is the honest default for order-sensitive consumers). Clean items
are never mutated, dropped, or reordered among themselves.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
import requests

from .corpus import Corpus, EvidenceItem, Kind, Modality, Provenance, TEXT_KINDS
from .errors import ConfigError, GenerationError
from .backends import DEFAULT_TIMEOUT, resolve_image_ref

logger = logging.getLogger(__name__)

ENTITY_PROMPT = "Write a short text about the main entity mentioned in the caption. Caption: <INPUT>"
SUPPORT_REFUTE_PROMPT = "Write a piece of evidence to support or refute the given caption. Caption: <INPUT>"

PROMPT_SLOT = "<INPUT>"


def build_prompt(caption: str, kind: Kind) -> str:
    """Instruction sent to the text generator for one pollution kind.

    Support and refute share one combined instruction; the sampled intent is
    carried in the evidence item's kind, not in the prompt.
    """
    if kind is Kind.ENTITY:
        template = ENTITY_PROMPT
    elif kind in (Kind.SUPPORT, Kind.REFUTE):
        template = SUPPORT_REFUTE_PROMPT
    else:
        raise ConfigError(f"no prompt for kind {kind.value!r}")
    return template.replace(PROMPT_SLOT, caption)


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 1.2
    max_tokens: int = 64
    top_p: float = 0.95


@dataclass(frozen=True)
class PollutionConfig:
    """Controls for one injection experiment. The seed is mandatory."""

    ratio: float
    seed: int
    modalities: frozenset[Modality] = frozenset({Modality.TEXT, Modality.IMAGE})
    text_kind_weights: dict[Kind, float] = field(
        default_factory=lambda: {kind: 1.0 for kind in TEXT_KINDS}
    )
    generator: str = "mock"

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"ratio must be in [0, 1], got {self.ratio}")
        if not self.modalities:
            raise ConfigError("at least one modality must be selected")
        if self.generator not in ("mock", "remote"):
            raise ConfigError(f"generator must be mock or remote, got {self.generator!r}")
        weights = self.text_kind_weights
        if set(weights) - set(TEXT_KINDS):
            raise ConfigError("text kind weights only apply to entity/support/refute")
        if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
            raise ConfigError("text kind weights must be non-negative with positive sum")


@dataclass(frozen=True)
class GenerationRecord:
    source_id: str
    prompt: str
    kind: Kind
    output_ref: str
    generator_tag: str

    def to_record(self) -> dict:
        return {
            "source_id": self.source_id,
            "prompt": self.prompt,
            "kind": self.kind.value,
            "output_ref": self.output_ref,
            "generator_tag": self.generator_tag,
        }


def seed_for(seed: int, label: str) -> int:
    """Stable sub-stream seed so each sampling purpose gets its own stream."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class TextGenerator(Protocol):
    tag: str

    def generate(self, caption: str, kind: Kind) -> str: ...


class ImageGenerator(Protocol):
    tag: str

    def generate(self, image_ref: str) -> str: ...


class MockTextGenerator:
    """Deterministic stand-in: kind-tagged transform of the caption."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.tag = "mock-text"

    def generate(self, caption: str, kind: Kind) -> str:
        token = hashlib.sha256(f"{self.seed}|{kind.value}|{caption}".encode("utf-8")).hexdigest()[:8]
        return f"[{kind.value}] {caption} #{token}"


class MockImageGenerator:
    """Deterministic stand-in: derives a variation reference from the source ref."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.tag = "mock-image"

    def generate(self, image_ref: str) -> str:
        token = hashlib.sha256(f"{self.seed}|{image_ref}".encode("utf-8")).hexdigest()[:8]
        head, dot, ext = image_ref.rpartition(".")
        if dot and "/" not in ext:
            return f"{head}.var-{token}.{ext}"
        return f"{image_ref}.var-{token}"


class RemoteTextGenerator:
    """Client for the sidecar text generation endpoint.

    Decoding parameters are client-side configuration and ride along in the
    request; the server applies the same defaults when they are absent.
    """

    def __init__(
        self,
        endpoint: str,
        seed: int,
        decoding: DecodingParams = DecodingParams(),
        timeout: float = DEFAULT_TIMEOUT,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.seed = int(seed)
        self.decoding = decoding
        self.timeout = timeout
        self._session = session or requests.Session()
        self.tag = "remote-text"

    def generate(self, caption: str, kind: Kind) -> str:
        payload = {
            "caption": caption,
            "kind": kind.value,
            "seed": self.seed,
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_tokens,
            "top_p": self.decoding.top_p,
        }
        try:
            resp = self._session.post(
                f"{self.endpoint}/v1/generate/text", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise GenerationError(f"text generation unreachable: {exc}") from None
        if resp.status_code != 200:
            raise GenerationError(f"text generation returned {resp.status_code}")
        return resp.json().get("text", "")


class RemoteImageGenerator:
    """Client for the sidecar image generation endpoint.

    Generated payloads are written under out_dir and the new evidence content
    ref is the written file's path.
    """

    def __init__(
        self,
        endpoint: str,
        seed: int,
        out_dir: str | Path,
        images_root: str | Path | None = None,
        diffusion_prompt: str = "",
        timeout: float = DEFAULT_TIMEOUT,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.seed = int(seed)
        self.out_dir = Path(out_dir)
        self.images_root = images_root
        self.diffusion_prompt = diffusion_prompt
        self.timeout = timeout
        self._session = session or requests.Session()
        self.tag = "remote-image"

    def generate(self, image_ref: str) -> str:
        source = resolve_image_ref(image_ref, self.images_root)
        payload = {
            "image_b64": base64.b64encode(source.read_bytes()).decode("ascii"),
            "seed": self.seed,
            "prompt": self.diffusion_prompt,
        }
        try:
            resp = self._session.post(
                f"{self.endpoint}/v1/generate/image", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise GenerationError(f"image generation unreachable: {exc}") from None
        if resp.status_code != 200:
            raise GenerationError(f"image generation returned {resp.status_code}")
        blob = base64.b64decode(resp.json()["image_b64"])
        token = hashlib.sha256(blob).hexdigest()[:8]
        self.out_dir.mkdir(parents=True, exist_ok=True)
        out_path = self.out_dir / f"{source.stem}.var-{token}.png"
        out_path.write_bytes(blob)
        return str(out_path)


def generate_text(caption: str, kind: Kind, generator: TextGenerator) -> str:
    """One generation with a single retry on empty output."""
    text = generator.generate(caption, kind)
    if not text:
        logger.warning("empty generation for kind %s, retrying once", kind.value)
        text = generator.generate(caption, kind)
    if not text:
        raise GenerationError(f"empty generation for kind {kind.value!r} after retry")
    return text


def generate_image(image_ref: str, generator: ImageGenerator) -> str:
    ref = generator.generate(image_ref)
    if not ref:
        raise GenerationError(f"image generation produced no reference for {image_ref!r}")
    return ref


@dataclass
class PoolBuildResult:
    items: list[EvidenceItem]
    records: list[GenerationRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)


def generate_pool(
    corpus: Corpus,
    config: PollutionConfig,
    text_generator: TextGenerator,
    image_generator: ImageGenerator,
) -> PoolBuildResult:
    """Produce one generated item per clean item of each selected modality.

    Text items get a kind sampled from the configured weights; the prompt
    recorded in the log is exactly what build_prompt produces for that kind
    and the claim caption. Per-item failures are recorded and skipped.
    """
    kinds = list(TEXT_KINDS)
    weights = np.array([config.text_kind_weights.get(k, 0.0) for k in kinds], dtype=np.float64)
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed_for(config.seed, "text-kinds"))
    result = PoolBuildResult(items=[], records=[])

    for claim in corpus.claims:
        if Modality.TEXT in config.modalities:
            for item in corpus.evidence_for(claim.id, Modality.TEXT, Provenance.CLEAN):
                kind = kinds[int(rng.choice(len(kinds), p=weights))]
                prompt = build_prompt(claim.caption, kind)
                try:
                    text = generate_text(claim.caption, kind, text_generator)
                except GenerationError as exc:
                    result.failures.append((item.id, str(exc)))
                    continue
                gen_id = f"g-{item.id}"
                result.items.append(
                    EvidenceItem(
                        id=gen_id,
                        claim_id=claim.id,
                        modality=Modality.TEXT,
                        content=text,
                        provenance=Provenance.GENERATED,
                        kind=kind,
                    )
                )
                result.records.append(
                    GenerationRecord(
                        source_id=item.id,
                        prompt=prompt,
                        kind=kind,
                        output_ref=gen_id,
                        generator_tag=text_generator.tag,
                    )
                )
        if Modality.IMAGE in config.modalities:
            for item in corpus.evidence_for(claim.id, Modality.IMAGE, Provenance.CLEAN):
                try:
                    ref = generate_image(item.content, image_generator)
                except GenerationError as exc:
                    result.failures.append((item.id, str(exc)))
                    continue
                gen_id = f"g-{item.id}"
                result.items.append(
                    EvidenceItem(
                        id=gen_id,
                        claim_id=claim.id,
                        modality=Modality.IMAGE,
                        content=ref,
                        provenance=Provenance.GENERATED,
                        kind=Kind.IMAGE_VARIATION,
                    )
                )
                result.records.append(
                    GenerationRecord(
                        source_id=item.id,
                        prompt="",
                        kind=Kind.IMAGE_VARIATION,
                        output_ref=gen_id,
                        generator_tag=image_generator.tag,
                    )
                )
    return result


def select_injection(
    pool: Sequence[EvidenceItem],
    config: PollutionConfig,
) -> list[EvidenceItem]:
    """Seeded prefix-shuffle sample of the eligible pool, per modality.

    Sampling is uniform over the whole pool (not per claim). The selected
    set at ratio r1 <= r2 is a subset of the set at r2 for the same seed;
    the returned list keeps pool order so saved manifests are stable.
    """
    chosen_indices: list[int] = []
    for modality in (Modality.TEXT, Modality.IMAGE):
        if modality not in config.modalities:
            continue
        eligible = [
            i
            for i, item in enumerate(pool)
            if item.modality is modality and item.provenance is Provenance.GENERATED
        ]
        count = int(np.floor(config.ratio * len(eligible)))
        if count == 0:
            continue
        rng = np.random.default_rng(seed_for(config.seed, f"inject:{modality.value}"))
        order = rng.permutation(len(eligible))
        chosen_indices.extend(eligible[i] for i in order[:count])
    chosen_indices.sort()
    return [pool[i] for i in chosen_indices]


def inject(corpus: Corpus, pool: Sequence[EvidenceItem], config: PollutionConfig) -> Corpus:
    """New corpus with the sampled generated items placed ahead of clean ones."""
    selected = select_injection(pool, config)
    return Corpus(corpus.claims, list(selected) + list(corpus.evidence))


def write_generation_log(path: str | Path, records: Iterable[GenerationRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_record(), ensure_ascii=False))
            handle.write("\n")
    return path


def load_generation_log(path: str | Path) -> list[GenerationRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            if not raw.strip():
                continue
            data = json.loads(raw)
            records.append(
                GenerationRecord(
                    source_id=data["source_id"],
                    prompt=data["prompt"],
                    kind=Kind(data["kind"]),
                    output_ref=data["output_ref"],
                    generator_tag=data["generator_tag"],
                )
            )
    return records
