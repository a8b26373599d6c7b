"""Hardening strategies: cross-modal evidence reranking and claim-evidence reasoning.

Reranking orders each evidence modality by cosine against the opposite side
of the claim (texts against the claim image, images against the claim
caption), so evidence that merely parrots one side stops dominating.

Reasoning picks the single most caption-like text and scores how consistent
that text is with the claim image; a generated text that echoes the caption
wins the intra-modal argmax and then betrays itself cross-modally.

All candidate inputs are (evidence_id, vector) pairs; outputs reference ids
only, never positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import cosine
from .errors import EmptyCandidatesError

Candidate = tuple[str, np.ndarray]


@dataclass(frozen=True)
class RankedList:
    """Evidence ids with scores, non-increasing by score, ties by ascending id."""

    entries: tuple[tuple[str, float], ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(entry[0] for entry in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ReasoningSelection:
    selected_text_id: str
    intra_modal_score: float
    consistency_score: float


def _rank(query_vec: np.ndarray, candidates: Sequence[Candidate]) -> RankedList:
    scored = [(item_id, cosine(query_vec, vec)) for item_id, vec in candidates]
    # total order: score descending, then id ascending; no partial-sort shortcuts
    scored.sort(key=lambda entry: (-entry[1], entry[0]))
    return RankedList(entries=tuple(scored))


def rerank_text_evidence(claim_image_vec: np.ndarray, texts: Sequence[Candidate]) -> RankedList:
    """Order text evidence by cosine against the claim image."""
    return _rank(claim_image_vec, texts)


def rerank_image_evidence(claim_caption_vec: np.ndarray, images: Sequence[Candidate]) -> RankedList:
    """Order image evidence by cosine against the claim caption."""
    return _rank(claim_caption_vec, images)


def take_top_k(ranked: RankedList, k: int) -> RankedList:
    """First min(k, len) entries; k must be at least 1."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return RankedList(entries=ranked.entries[:k])


def reason_claim_evidence(
    claim_caption_vec: np.ndarray,
    claim_image_vec: np.ndarray,
    texts: Sequence[Candidate],
) -> ReasoningSelection:
    """Select the most caption-similar text, then score it against the image.

    Ties on the intra-modal score resolve to the smallest id so reruns are
    stable.
    """
    if not texts:
        raise EmptyCandidatesError("reasoning needs at least one text candidate")
    best_id: str | None = None
    best_vec: np.ndarray | None = None
    best_score = -np.inf
    for item_id, vec in texts:
        score = cosine(claim_caption_vec, vec)
        if score > best_score or (score == best_score and (best_id is None or item_id < best_id)):
            best_id, best_vec, best_score = item_id, vec, score
    return ReasoningSelection(
        selected_text_id=best_id,
        intra_modal_score=best_score,
        consistency_score=cosine(best_vec, claim_image_vec),
    )


def write_ranked_jsonl(
    path: str | Path,
    rankings: Iterable[tuple[str, str, RankedList]],
) -> Path:
    """Audit export: one line per (claim, modality, rank) with 1-based ranks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for claim_id, modality, ranked in rankings:
            for rank, (evidence_id, score) in enumerate(ranked.entries, 1):
                record = {
                    "claim_id": claim_id,
                    "modality": modality,
                    "rank": rank,
                    "evidence_id": evidence_id,
                    "score": round(score, 10),
                }
                handle.write(json.dumps(record, ensure_ascii=False))
                handle.write("\n")
    return path
