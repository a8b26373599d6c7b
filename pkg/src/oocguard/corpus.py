"""Claim/evidence corpus model and JSONL manifest IO.

A corpus is two line-delimited JSON manifests: one for claims (a caption
paired with an image reference plus a veracity label) and one for evidence
items attached to claims. Evidence carries its modality and provenance so
downstream stages can tell clean from generated material without trusting
content.

Manifests are UTF-8. Loading is strict by default: unknown fields are
rejected with the offending line number; lenient mode downgrades unknown
fields to a warning. Ordering is preserved exactly as found in the files,
and save/load round-trips are identity.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DanglingReferenceError, DuplicateIdError, ManifestParseError

logger = logging.getLogger(__name__)


class Label(str, Enum):
    TRUE = "true"
    FALSE = "false"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Modality(str, Enum):
    TEXT = "text"
    IMAGE = "image"


class Provenance(str, Enum):
    CLEAN = "clean"
    GENERATED = "generated"


class Kind(str, Enum):
    NONE = "none"
    ENTITY = "entity"
    SUPPORT = "support"
    REFUTE = "refute"
    IMAGE_VARIATION = "image_variation"


TEXT_KINDS = (Kind.ENTITY, Kind.SUPPORT, Kind.REFUTE)

_CLAIM_FIELDS = ("id", "caption", "image_ref", "label", "split")
_EVIDENCE_FIELDS = ("id", "claim_id", "modality", "content", "provenance", "kind")


@dataclass(frozen=True)
class Claim:
    id: str
    caption: str
    image_ref: str
    label: Label
    split: Split

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "caption": self.caption,
            "image_ref": self.image_ref,
            "label": self.label.value,
            "split": self.split.value,
        }


@dataclass(frozen=True)
class EvidenceItem:
    id: str
    claim_id: str
    modality: Modality
    content: str
    provenance: Provenance
    kind: Kind

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "claim_id": self.claim_id,
            "modality": self.modality.value,
            "content": self.content,
            "provenance": self.provenance.value,
            "kind": self.kind.value,
        }


def _check_kind(item: EvidenceItem) -> str | None:
    """Return a constraint-violation message, or None if the item is sound."""
    if item.provenance is Provenance.CLEAN and item.kind is not Kind.NONE:
        return "clean evidence must carry kind 'none'"
    if item.provenance is Provenance.GENERATED:
        if item.modality is Modality.TEXT and item.kind not in TEXT_KINDS:
            return "generated text must carry kind entity/support/refute"
        if item.modality is Modality.IMAGE and item.kind is not Kind.IMAGE_VARIATION:
            return "generated images must carry kind 'image_variation'"
    return None


class Corpus:
    """Ordered claims plus per-claim evidence, indexed for detector use."""

    def __init__(self, claims: Iterable[Claim], evidence: Iterable[EvidenceItem]):
        self.claims: list[Claim] = list(claims)
        self.evidence: list[EvidenceItem] = list(evidence)
        self._claims_by_id: dict[str, Claim] = {}
        for claim in self.claims:
            if claim.id in self._claims_by_id:
                raise DuplicateIdError(f"duplicate claim id {claim.id!r}")
            self._claims_by_id[claim.id] = claim
        self._by_claim: dict[tuple[str, Modality], list[EvidenceItem]] = {}
        seen: set[str] = set()
        for item in self.evidence:
            if item.id in seen:
                raise DuplicateIdError(f"duplicate evidence id {item.id!r}")
            seen.add(item.id)
            if item.claim_id not in self._claims_by_id:
                raise DanglingReferenceError(
                    f"evidence {item.id!r} references unknown claim {item.claim_id!r}"
                )
            self._by_claim.setdefault((item.claim_id, item.modality), []).append(item)

    def claim(self, claim_id: str) -> Claim:
        return self._claims_by_id[claim_id]

    def has_claim(self, claim_id: str) -> bool:
        return claim_id in self._claims_by_id

    def evidence_for(
        self,
        claim_id: str,
        modality: Modality,
        provenance: Provenance | None = None,
    ) -> list[EvidenceItem]:
        """Evidence for one claim and modality, in manifest order."""
        items = self._by_claim.get((claim_id, modality), [])
        if provenance is None:
            return list(items)
        return [item for item in items if item.provenance is provenance]

    def texts_for(self, claim_id: str) -> list[EvidenceItem]:
        return self.evidence_for(claim_id, Modality.TEXT)

    def images_for(self, claim_id: str) -> list[EvidenceItem]:
        return self.evidence_for(claim_id, Modality.IMAGE)

    def __len__(self) -> int:
        return len(self.claims)


def _parse_enum(enum_cls, raw, path: str, line: int, field: str):
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = "/".join(member.value for member in enum_cls)
        raise ManifestParseError(
            path, line, f"expected one of {allowed}, got {raw!r}", field=field
        ) from None


def _iter_records(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(str(path), line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise ManifestParseError(str(path), line_no, "record is not a JSON object")
            yield line_no, record


def _take_str(record: dict, field: str, path: str, line: int, allow_empty: bool = True) -> str:
    if field not in record:
        raise ManifestParseError(path, line, "missing required field", field=field)
    value = record[field]
    if not isinstance(value, str):
        raise ManifestParseError(path, line, f"expected string, got {type(value).__name__}", field=field)
    if not allow_empty and not value:
        raise ManifestParseError(path, line, "must be non-empty", field=field)
    return value


def _check_unknown(record: dict, known: tuple[str, ...], path: str, line: int, strict: bool) -> None:
    unknown = [key for key in record if key not in known]
    if not unknown:
        return
    if strict:
        raise ManifestParseError(path, line, "unknown field", field=unknown[0])
    logger.warning("%s:%d: ignoring unknown fields %s", path, line, unknown)


def parse_claim(record: dict, path: str = "<memory>", line: int = 0, strict: bool = True) -> Claim:
    _check_unknown(record, _CLAIM_FIELDS, path, line, strict)
    return Claim(
        id=_take_str(record, "id", path, line, allow_empty=False),
        caption=_take_str(record, "caption", path, line, allow_empty=False),
        image_ref=_take_str(record, "image_ref", path, line, allow_empty=False),
        label=_parse_enum(Label, record.get("label"), path, line, "label"),
        split=_parse_enum(Split, record.get("split"), path, line, "split"),
    )


def parse_evidence(record: dict, path: str = "<memory>", line: int = 0, strict: bool = True) -> EvidenceItem:
    _check_unknown(record, _EVIDENCE_FIELDS, path, line, strict)
    item = EvidenceItem(
        id=_take_str(record, "id", path, line, allow_empty=False),
        claim_id=_take_str(record, "claim_id", path, line, allow_empty=False),
        modality=_parse_enum(Modality, record.get("modality"), path, line, "modality"),
        content=_take_str(record, "content", path, line, allow_empty=False),
        provenance=_parse_enum(Provenance, record.get("provenance"), path, line, "provenance"),
        kind=_parse_enum(Kind, record.get("kind"), path, line, "kind"),
    )
    violation = _check_kind(item)
    if violation:
        raise ManifestParseError(path, line, violation, field="kind")
    return item


def load_claims(path: str | Path, strict: bool = True) -> list[Claim]:
    path = Path(path)
    return [parse_claim(rec, str(path), line, strict) for line, rec in _iter_records(path)]


def load_evidence(path: str | Path, strict: bool = True) -> list[EvidenceItem]:
    path = Path(path)
    return [parse_evidence(rec, str(path), line, strict) for line, rec in _iter_records(path)]


def load_corpus(claims_path: str | Path, evidence_path: str | Path, strict: bool = True) -> Corpus:
    """Load both manifests and index them; all schema errors carry file:line."""
    return Corpus(load_claims(claims_path, strict), load_evidence(evidence_path, strict))


def _write_jsonl(path: Path, records: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")


def save_corpus(corpus: Corpus, out_dir: str | Path) -> tuple[Path, Path]:
    """Write claims.jsonl and evidence.jsonl under out_dir, preserving order."""
    out_dir = Path(out_dir)
    claims_path = out_dir / "claims.jsonl"
    evidence_path = out_dir / "evidence.jsonl"
    _write_jsonl(claims_path, (claim.to_record() for claim in corpus.claims))
    _write_jsonl(evidence_path, (item.to_record() for item in corpus.evidence))
    return claims_path, evidence_path


save_evidence = _write_jsonl  # callers with bare item lists reuse the same writer


STAT_ROWS = ("claims", "clean_text", "generated_text", "clean_image", "generated_image")


@dataclass
class StatsTable:
    """Per-split tallies of claims and the four evidence classes."""

    counts: dict[tuple[str, str], int]
    splits: tuple[str, ...]

    def value(self, split: str, row: str) -> int:
        return self.counts.get((split, row), 0)

    def to_csv(self) -> str:
        lines = ["category," + ",".join(self.splits)]
        for row in STAT_ROWS:
            cells = [str(self.value(split, row)) for split in self.splits]
            lines.append(f"{row}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        labels = {
            "claims": "Claims",
            "clean_text": "Clean Text",
            "generated_text": "Generated Text",
            "clean_image": "Clean Image",
            "generated_image": "Generated Image",
        }
        width = max(len(v) for v in labels.values()) + 2
        cols = [s.capitalize() for s in self.splits]
        header = " " * width + "".join(f"{c:>14}" for c in cols)
        lines = [header]
        for row in STAT_ROWS:
            cells = "".join(f"{self.value(split, row):>14,}" for split in self.splits)
            lines.append(f"{labels[row]:<{width}}" + cells)
        return "\n".join(lines) + "\n"


def corpus_stats(corpus: Corpus) -> StatsTable:
    """Tally claims and evidence classes per split.

    Evidence is attributed to the split of its claim. Splits appear in
    train/validation/test order, restricted to splits actually present.
    """
    counter: Counter[tuple[str, str]] = Counter()
    split_of: dict[str, str] = {}
    present: set[str] = set()
    for claim in corpus.claims:
        split_of[claim.id] = claim.split.value
        present.add(claim.split.value)
        counter[(claim.split.value, "claims")] += 1
    for item in corpus.evidence:
        split = split_of[item.claim_id]
        row = f"{item.provenance.value}_{item.modality.value}"
        counter[(split, row)] += 1
    ordered = tuple(s.value for s in Split if s.value in present)
    return StatsTable(counts=dict(counter), splits=ordered)
