"""Evidence-pollution simulation and hardened out-of-context detection."""

from .corpus import (
    Claim,
    Corpus,
    EvidenceItem,
    Kind,
    Label,
    Modality,
    Provenance,
    Split,
    corpus_stats,
    load_corpus,
    save_corpus,
)
from .detector import DetectorConfig, Strategy, Verdict, detect
from .embedding import EmbeddingCache, EmbeddingStore, batch_embed, cosine
from .evalharness import (
    EvalReport,
    Setting,
    clean_precision_at_k,
    compute_metrics,
    ratio_sweep,
    run_evaluation,
    similarity_delta_histogram,
)
from .pollution import PollutionConfig, build_prompt, generate_pool, inject
from .strategies import (
    RankedList,
    ReasoningSelection,
    reason_claim_evidence,
    rerank_image_evidence,
    rerank_text_evidence,
    take_top_k,
)

__version__ = "0.1.0"

__all__ = [
    "Claim",
    "Corpus",
    "DetectorConfig",
    "EmbeddingCache",
    "EmbeddingStore",
    "EvalReport",
    "EvidenceItem",
    "Kind",
    "Label",
    "Modality",
    "PollutionConfig",
    "Provenance",
    "RankedList",
    "ReasoningSelection",
    "Setting",
    "Split",
    "Strategy",
    "Verdict",
    "batch_embed",
    "build_prompt",
    "clean_precision_at_k",
    "compute_metrics",
    "corpus_stats",
    "cosine",
    "detect",
    "generate_pool",
    "inject",
    "load_corpus",
    "ratio_sweep",
    "reason_claim_evidence",
    "rerank_image_evidence",
    "rerank_text_evidence",
    "run_evaluation",
    "save_corpus",
    "similarity_delta_histogram",
    "take_top_k",
]
