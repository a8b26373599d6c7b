"""Evaluation harness: metrics, pollution settings, sweeps, and reports.

Reports are plain CSV plus a fixed-width text table; there is no plotting
dependency. All rendering uses pinned float formats so identical runs are
byte-identical.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, Label, Modality, Provenance, Split
from .detector import DetectorConfig, Strategy, Verdict, detect
from .embedding import EmbeddingStore, caption_key, cosine, image_key
from .errors import CoverageError, EvaluationError
from .pollution import PollutionConfig, inject
from .strategies import rerank_image_evidence, rerank_text_evidence

logger = logging.getLogger(__name__)


class Setting(str, Enum):
    CLEAN = "clean"
    POLLUTED_TEXT = "polluted_text"
    POLLUTED_IMAGE = "polluted_image"
    POLLUTED_BOTH = "polluted_both"

    @property
    def modalities(self) -> frozenset[Modality]:
        if self is Setting.POLLUTED_TEXT:
            return frozenset({Modality.TEXT})
        if self is Setting.POLLUTED_IMAGE:
            return frozenset({Modality.IMAGE})
        if self is Setting.POLLUTED_BOTH:
            return frozenset({Modality.TEXT, Modality.IMAGE})
        return frozenset()


SETTING_ORDER = tuple(Setting)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1_true: float
    f1_false: float


def _f1_for(labels: Sequence[Label], preds: Sequence[Label], positive: Label) -> float:
    if all(l is not positive for l in labels) and all(p is not positive for p in preds):
        warnings.warn(
            f"class {positive.value!r} absent from labels and predictions; F1 set to 0",
            stacklevel=3,
        )
        return 0.0
    tp = sum(1 for l, p in zip(labels, preds) if l is positive and p is positive)
    fp = sum(1 for l, p in zip(labels, preds) if l is not positive and p is positive)
    fn = sum(1 for l, p in zip(labels, preds) if l is positive and p is not positive)
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(labels: Sequence[Label], predictions: Sequence[Label]) -> Metrics:
    """Accuracy plus per-class F1 with True and False each taken as positive."""
    if len(labels) != len(predictions):
        raise EvaluationError(
            f"labels ({len(labels)}) and predictions ({len(predictions)}) differ in length"
        )
    if not labels:
        raise EvaluationError("no labeled claims to score")
    correct = sum(1 for l, p in zip(labels, predictions) if l is p)
    return Metrics(
        accuracy=correct / len(labels),
        f1_true=_f1_for(labels, predictions, Label.TRUE),
        f1_false=_f1_for(labels, predictions, Label.FALSE),
    )


@dataclass(frozen=True)
class CleanPrecisionResult:
    value: float
    n_claims: int
    n_skipped: int


def clean_precision_at_k(ranked_flags: Sequence[Sequence[bool]], k: int) -> CleanPrecisionResult:
    """Mean fraction of clean items in the top min(k, len) ranked slots.

    One inner sequence per claim, True meaning the slot holds clean
    evidence. Claims with no evidence are skipped but reported.
    """
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    fractions = []
    skipped = 0
    for flags in ranked_flags:
        if not flags:
            skipped += 1
            continue
        top = flags[: min(k, len(flags))]
        fractions.append(sum(1 for f in top if f) / len(top))
    if not fractions:
        return CleanPrecisionResult(value=0.0, n_claims=0, n_skipped=skipped)
    return CleanPrecisionResult(
        value=float(np.mean(fractions)), n_claims=len(fractions), n_skipped=skipped
    )


@dataclass(frozen=True)
class RerankEvalRow:
    evidence_modality: str
    query_modality: str
    precision_at: dict[int, float]


def rerank_eval(
    corpus: Corpus, store: EmbeddingStore, ks: Sequence[int] = (1, 3, 5, 10)
) -> list[RerankEvalRow]:
    """Clean-precision@k of both rerank directions over the whole corpus."""
    text_flags: list[list[bool]] = []
    image_flags: list[list[bool]] = []
    for claim in corpus.claims:
        ck, ik = caption_key(claim.id), image_key(claim.id)
        if ck not in store or ik not in store:
            continue
        texts = [(e.id, store.get(e.id)) for e in corpus.texts_for(claim.id) if e.id in store]
        images = [(e.id, store.get(e.id)) for e in corpus.images_for(claim.id) if e.id in store]
        clean_ids = {
            e.id
            for e in corpus.texts_for(claim.id) + corpus.images_for(claim.id)
            if e.provenance is Provenance.CLEAN
        }
        if texts:
            ranked = rerank_text_evidence(store.get(ik), texts)
            text_flags.append([eid in clean_ids for eid in ranked.ids])
        else:
            text_flags.append([])
        if images:
            ranked = rerank_image_evidence(store.get(ck), images)
            image_flags.append([eid in clean_ids for eid in ranked.ids])
        else:
            image_flags.append([])
    return [
        RerankEvalRow(
            evidence_modality="text",
            query_modality="image",
            precision_at={k: clean_precision_at_k(text_flags, k).value for k in ks},
        ),
        RerankEvalRow(
            evidence_modality="image",
            query_modality="text",
            precision_at={k: clean_precision_at_k(image_flags, k).value for k in ks},
        ),
    ]


@dataclass
class EvalReport:
    setting: Setting
    strategy: Strategy
    accuracy: float
    f1_true: float
    f1_false: float
    n_claims: int
    n_skipped: int = 0
    delta_vs_clean: tuple[float, float, float] | None = None
    verdicts: list[Verdict] = field(default_factory=list, repr=False, compare=False)


def run_evaluation(
    corpus: Corpus,
    store: EmbeddingStore,
    config: DetectorConfig,
    setting: Setting,
    clean_baseline: EvalReport | None = None,
    coverage_tolerance: float = 0.0,
    split: Split | None = None,
) -> EvalReport:
    """Detect every labeled claim and aggregate metrics.

    Claims whose caption or image vector is missing from the store count
    against coverage; if their fraction exceeds coverage_tolerance the run
    aborts. Evidence items without vectors are silently excluded (they were
    already reported at embed time). Claims are processed in corpus order
    and verdicts reduced in claim-id order, so reruns are deterministic.
    """
    claims = [c for c in corpus.claims if split is None or c.split is split]
    if not claims:
        raise EvaluationError("no claims selected for evaluation")
    labels: list[Label] = []
    preds: list[Label] = []
    verdicts: list[Verdict] = []
    skipped = 0
    for claim in claims:
        ck, ik = caption_key(claim.id), image_key(claim.id)
        if ck not in store or ik not in store:
            skipped += 1
            continue
        texts = [(e.id, store.get(e.id)) for e in corpus.texts_for(claim.id) if e.id in store]
        images = [(e.id, store.get(e.id)) for e in corpus.images_for(claim.id) if e.id in store]
        verdict = detect(claim.id, store.get(ck), store.get(ik), texts, images, config)
        labels.append(claim.label)
        preds.append(verdict.predicted)
        verdicts.append(verdict)
    if skipped / len(claims) > coverage_tolerance:
        raise CoverageError(
            f"{skipped}/{len(claims)} claims lack claim embeddings "
            f"(tolerance {coverage_tolerance})"
        )
    metrics = compute_metrics(labels, preds)
    delta = None
    if clean_baseline is not None:
        delta = (
            metrics.accuracy - clean_baseline.accuracy,
            metrics.f1_true - clean_baseline.f1_true,
            metrics.f1_false - clean_baseline.f1_false,
        )
    verdicts.sort(key=lambda v: v.claim_id)
    return EvalReport(
        setting=setting,
        strategy=config.strategy,
        accuracy=metrics.accuracy,
        f1_true=metrics.f1_true,
        f1_false=metrics.f1_false,
        n_claims=len(labels),
        n_skipped=skipped,
        delta_vs_clean=delta,
        verdicts=verdicts,
    )


DEFAULT_SWEEP_RATIOS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class SweepPoint:
    ratio: float
    accuracy: float
    f1_true: float
    f1_false: float


def ratio_sweep(
    corpus: Corpus,
    pool: Sequence,
    store: EmbeddingStore,
    config: DetectorConfig,
    seed: int,
    modalities: frozenset[Modality],
    ratios: Sequence[float] = DEFAULT_SWEEP_RATIOS,
    coverage_tolerance: float = 0.0,
    split: Split | None = None,
) -> list[SweepPoint]:
    """Full inject + evaluate per ratio with one shared seed.

    Ratio 0 is the clean corpus by construction, so its accuracy equals the
    clean baseline exactly.
    """
    points = []
    for ratio in ratios:
        pcfg = PollutionConfig(ratio=ratio, seed=seed, modalities=modalities)
        injected = inject(corpus, pool, pcfg)
        report = run_evaluation(
            injected,
            store,
            config,
            Setting.POLLUTED_BOTH,
            coverage_tolerance=coverage_tolerance,
            split=split,
        )
        points.append(
            SweepPoint(
                ratio=ratio,
                accuracy=report.accuracy,
                f1_true=report.f1_true,
                f1_false=report.f1_false,
            )
        )
    return points


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    out_of_range: int
    n_values: int


def similarity_delta_histogram(
    deltas: Sequence[float], bins: int, value_range: tuple[float, float]
) -> Histogram:
    """Fixed-width histogram, bins left-closed right-open, last bin closed.

    Out-of-range values are excluded from the counts and reported
    separately; in-range counts always sum to n_values - out_of_range.
    """
    if bins < 1:
        raise EvaluationError(f"bins must be >= 1, got {bins}")
    lo, hi = value_range
    if not lo < hi:
        raise EvaluationError(f"invalid range: [{lo}, {hi}]")
    if len(deltas) == 0:
        raise EvaluationError("no clean/generated pairs to histogram")
    values = np.asarray(deltas, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return Histogram(
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        out_of_range=int(len(values) - counts.sum()),
        n_values=len(values),
    )


def paired_similarity_deltas(
    corpus: Corpus, store: EmbeddingStore, evidence_modality: Modality
) -> list[float]:
    """cos(query, generated) - cos(query, clean) per positionally paired items.

    The query is the opposite claim side (claim image for text evidence,
    claim caption for images). Clean and generated items of each claim pair
    up in manifest order; unmatched leftovers are ignored.
    """
    query_of = caption_key if evidence_modality is Modality.IMAGE else image_key
    deltas: list[float] = []
    for claim in corpus.claims:
        qk = query_of(claim.id)
        if qk not in store:
            continue
        query = store.get(qk)
        items = corpus.evidence_for(claim.id, evidence_modality)
        clean = [e for e in items if e.provenance is Provenance.CLEAN and e.id in store]
        generated = [e for e in items if e.provenance is Provenance.GENERATED and e.id in store]
        for c_item, g_item in zip(clean, generated):
            deltas.append(
                cosine(query, store.get(g_item.id)) - cosine(query, store.get(c_item.id))
            )
    return deltas


REPORT_HEADER = "setting,strategy,accuracy,f1_true,f1_false,d_acc,d_f1_true,d_f1_false"


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def report_csv(reports: Iterable[EvalReport]) -> str:
    ordered = sorted(
        reports,
        key=lambda r: (SETTING_ORDER.index(r.setting), list(Strategy).index(r.strategy)),
    )
    lines = [REPORT_HEADER]
    for report in ordered:
        deltas = ["", "", ""]
        if report.delta_vs_clean is not None:
            deltas = [_fmt(d) for d in report.delta_vs_clean]
        lines.append(
            ",".join(
                [
                    report.setting.value,
                    report.strategy.value,
                    _fmt(report.accuracy),
                    _fmt(report.f1_true),
                    _fmt(report.f1_false),
                    *deltas,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _cell(value: float, delta: float | None) -> str:
    base = f"{value * 100:.2f}"
    if delta is None:
        return base
    magnitude = abs(delta) * 100
    if delta < 0:
        return f"{base} (↓{magnitude:.2f})"
    if delta > 0:
        return f"{base} (↑{magnitude:.2f})"
    return f"{base} (=0.00)"


def report_text(reports: Iterable[EvalReport]) -> str:
    """Fixed-width table; negative deltas render as down-arrow cells."""
    ordered = sorted(
        reports,
        key=lambda r: (SETTING_ORDER.index(r.setting), list(Strategy).index(r.strategy)),
    )
    header = f"{'setting':<16}{'strategy':<10}{'accuracy':<18}{'f1_true':<18}{'f1_false':<18}"
    lines = [header, "-" * len(header)]
    for r in ordered:
        d = r.delta_vs_clean or (None, None, None)
        lines.append(
            f"{r.setting.value:<16}{r.strategy.value:<10}"
            f"{_cell(r.accuracy, d[0]):<18}"
            f"{_cell(r.f1_true, d[1]):<18}"
            f"{_cell(r.f1_false, d[2]):<18}"
        )
    return "\n".join(lines) + "\n"


def sweep_csv(points: Iterable[SweepPoint]) -> str:
    lines = ["ratio,accuracy,f1_true,f1_false"]
    for p in points:
        lines.append(
            ",".join([f"{p.ratio:g}", _fmt(p.accuracy), _fmt(p.f1_true), _fmt(p.f1_false)])
        )
    return "\n".join(lines) + "\n"


def histogram_csv(hist: Histogram) -> str:
    lines = ["bin_lo,bin_hi,count"]
    for i, count in enumerate(hist.counts):
        lines.append(f"{hist.bin_edges[i]:.6f},{hist.bin_edges[i + 1]:.6f},{count}")
    return "\n".join(lines) + "\n"
