"""Reference detector: component scoring, fusion, calibration, verdict export.

The detector is a deliberately transparent stand-in for the heavyweight
checkers the pipeline is meant to stress: every component is a cosine in the
shared embedding space, fusion is a weighted mean, and the decision is a
threshold. That keeps pollution effects attributable to evidence selection
rather than model opacity.

Components per claim:
    consistency  cos(claim image, claim caption)
    textual      mean cos(claim image, selected top-k_text texts)
    visual       mean cos(claim caption, selected top-k_image images)
    reasoning    consistency score of the most caption-similar text
                 (strategies reason/both only)

Selection is manifest order under strategy none/reason and cosine order
under rerank/both. A modality with no embedded evidence drops its component
and the remaining weights renormalize; missing claim embeddings are hard
errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Label
from .embedding import cosine
from .errors import CalibrationError, ConfigError, DetectorError, VerdictParseError
from .strategies import (
    Candidate,
    ReasoningSelection,
    reason_claim_evidence,
    rerank_image_evidence,
    rerank_text_evidence,
    take_top_k,
)


class Strategy(str, Enum):
    NONE = "none"
    RERANK = "rerank"
    REASON = "reason"
    BOTH = "both"

    @property
    def reranks(self) -> bool:
        return self in (Strategy.RERANK, Strategy.BOTH)

    @property
    def reasons(self) -> bool:
        return self in (Strategy.REASON, Strategy.BOTH)


COMPONENTS = ("consistency", "textual", "visual", "reasoning")


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = 0.5
    k_text: int = 1
    k_image: int = 5
    strategy: Strategy = Strategy.NONE
    weights: dict[str, float] = field(
        default_factory=lambda: {name: 1.0 for name in COMPONENTS}
    )

    def __post_init__(self):
        if self.k_text < 1 or self.k_image < 1:
            raise ConfigError("k_text and k_image must be >= 1")
        if set(self.weights) - set(COMPONENTS):
            unknown = sorted(set(self.weights) - set(COMPONENTS))
            raise ConfigError(f"unknown component weights: {unknown}")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError("component weights must be non-negative")
        if not any(w > 0 for w in self.weights.values()):
            raise ConfigError("at least one component weight must be positive")

    def weight(self, name: str) -> float:
        return self.weights.get(name, 0.0)


@dataclass(frozen=True)
class Verdict:
    claim_id: str
    predicted: Label
    fused_score: float
    components: dict[str, float]
    selected_evidence: dict[str, tuple[str, ...]]

    def to_record(self, strategy: Strategy) -> dict:
        return {
            "claim_id": self.claim_id,
            "predicted": self.predicted.value,
            "fused_score": self.fused_score,
            "components": {k: self.components[k] for k in COMPONENTS if k in self.components},
            "strategy": strategy.value,
        }


def fuse(components: dict[str, float], config: DetectorConfig) -> float:
    """Weighted mean over the components actually present."""
    total = sum(config.weight(name) for name in components)
    if total <= 0:
        raise DetectorError("no positively weighted component present")
    return sum(config.weight(name) * value for name, value in components.items()) / total


def detect(
    claim_id: str,
    claim_caption_vec: np.ndarray,
    claim_image_vec: np.ndarray,
    texts: Sequence[Candidate],
    images: Sequence[Candidate],
    config: DetectorConfig,
) -> Verdict:
    """Score one claim against its embedded evidence.

    texts/images arrive in manifest order; claim vectors are required (the
    caller raises before getting here if they are missing).
    """
    components: dict[str, float] = {
        "consistency": cosine(claim_image_vec, claim_caption_vec)
    }
    selected: dict[str, tuple[str, ...]] = {}

    if texts:
        if config.strategy.reranks:
            picked = take_top_k(rerank_text_evidence(claim_image_vec, texts), config.k_text)
            lookup = {item_id: vec for item_id, vec in texts}
            chosen = [(i, lookup[i]) for i in picked.ids]
        else:
            chosen = list(texts[: config.k_text])
        components["textual"] = float(
            np.mean([cosine(claim_image_vec, vec) for _, vec in chosen])
        )
        selected["texts"] = tuple(item_id for item_id, _ in chosen)

    if images:
        if config.strategy.reranks:
            picked = take_top_k(rerank_image_evidence(claim_caption_vec, images), config.k_image)
            lookup = {item_id: vec for item_id, vec in images}
            chosen = [(i, lookup[i]) for i in picked.ids]
        else:
            chosen = list(images[: config.k_image])
        components["visual"] = float(
            np.mean([cosine(claim_caption_vec, vec) for _, vec in chosen])
        )
        selected["images"] = tuple(item_id for item_id, _ in chosen)

    if config.strategy.reasons and texts:
        selection: ReasoningSelection = reason_claim_evidence(
            claim_caption_vec, claim_image_vec, texts
        )
        components["reasoning"] = selection.consistency_score
        selected["reasoning"] = (selection.selected_text_id,)

    fused = fuse(components, config)
    predicted = Label.TRUE if fused >= config.threshold else Label.FALSE
    return Verdict(
        claim_id=claim_id,
        predicted=predicted,
        fused_score=fused,
        components=components,
        selected_evidence=selected,
    )


THRESHOLD_GRID = [round(i / 100, 2) for i in range(-100, 101)]


def best_threshold(labels: Sequence[Label], scores: Sequence[float]) -> float:
    """Grid search tau over [-1.00, 1.00] step 0.01, maximizing accuracy.

    Ties resolve to the smallest tau. The labels must contain both classes;
    a single-class split cannot anchor a decision boundary.
    """
    if len(labels) != len(scores):
        raise CalibrationError("labels and scores must have equal length")
    if not labels:
        raise CalibrationError("empty validation split")
    if len(set(labels)) < 2:
        raise CalibrationError("validation split contains a single class")
    best_tau = None
    best_acc = -1.0
    for tau in THRESHOLD_GRID:
        correct = 0
        for label, score in zip(labels, scores):
            predicted = Label.TRUE if score >= tau else Label.FALSE
            correct += predicted is label
        acc = correct / len(labels)
        if acc > best_acc:
            best_acc = acc
            best_tau = tau
    return best_tau


def calibrate_threshold(
    labeled_scores: Iterable[tuple[Label, float]],
) -> float:
    """Threshold from (label, fused score) pairs of a validation split."""
    pairs = list(labeled_scores)
    labels = [label for label, _ in pairs]
    scores = [score for _, score in pairs]
    return best_threshold(labels, scores)


VERDICT_PROMPT_SYSTEM = (
    "Task description: some rumormongers use images from other events as illustrations "
    "of the current news event to make multimodal misinformation. Given a news caption "
    "and a news image, you are responsible for judging whether the given image is "
    "wrongly used in a different news context. You will be presented with a caption, an "
    "image, visual evidence, and textual evidence. You should use the following "
    "step-by-step instructions to derive your judgment:\n"
    "Step 1 - Make a decision based on inconsistency between the caption and the image.\n"
    "Step 2 - Make a judgement according to the inconsistency between the image and the "
    "visual evidence.\n"
    "Step 3 - Make a judgement according to the inconsistency between the caption and "
    "the textual evidence.\n"
    "Step 4 - According to the previous steps, you will first think out loud about your "
    "eventual conclusion, enumerating reasons why the image does or does not match the "
    "give caption. After thinking out loud, you should output either 'Real' or 'Fake' "
    "depending on whether you think the image is faithful to the caption."
)


def build_llm_verdict_prompt(
    caption: str,
    textual_evidence: Sequence[str] = (),
    visual_evidence: Sequence[str] = (),
) -> str:
    """Verdict prompt for an external multimodal judge.

    The image itself travels out of band; the `<image>` placeholder marks its
    slot. Visual evidence is passed as captions of the retrieved images.
    Empty evidence lists leave their sections empty rather than dropping
    them.
    """
    visual = " ".join(visual_evidence)
    textual = " ".join(textual_evidence)
    query = (
        "<image>\n"
        f"Caption: {caption}\n"
        f"Visual Evidence: {visual}\n"
        f"Textual Evidence: {textual}\n"
        "Your judgement:"
    )
    return f"{VERDICT_PROMPT_SYSTEM}\n\n{query}"


def parse_verdict_response(response: str) -> Label:
    """Map the judge's literal token to a label; anything else is unresolved."""
    token = response.strip().strip("'\"")
    if token == "Real":
        return Label.TRUE
    if token == "Fake":
        return Label.FALSE
    raise VerdictParseError(f"unresolved verdict response: {response[:80]!r}")


def write_verdicts_jsonl(
    path: str | Path, verdicts: Iterable[Verdict], strategy: Strategy
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(verdicts, key=lambda v: v.claim_id)
    with open(path, "w", encoding="utf-8") as handle:
        for verdict in ordered:
            record = verdict.to_record(strategy)
            record["fused_score"] = round(record["fused_score"], 10)
            record["components"] = {
                k: round(v, 10) for k, v in record["components"].items()
            }
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")
    return path
