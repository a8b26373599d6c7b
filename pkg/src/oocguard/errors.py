"""Exception types shared across the pipeline.

Every failure the CLI reports maps to one of these classes so each failure
class keeps a single-line diagnostic.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all pipeline failures."""


class CorpusError(PipelineError):
    """Manifest-level failure (parsing, schema, referential integrity)."""


class ManifestParseError(CorpusError):
    """A manifest line failed to parse or violated the record schema."""

    def __init__(self, path: str, line: int, message: str, field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = f"{path}:{line}"
        if field:
            message = f"field {field!r}: {message}"
        super().__init__(f"{where}: {message}")


class DuplicateIdError(CorpusError):
    pass


class DanglingReferenceError(CorpusError):
    pass


class EmbeddingError(PipelineError):
    """Embedding gateway or cache failure."""


class CacheFormatError(EmbeddingError):
    """Binary cache file is malformed (bad magic, truncation, duplicates)."""


class DimensionMismatchError(EmbeddingError):
    pass


class ZeroNormError(EmbeddingError):
    pass


class BackendUnavailableError(EmbeddingError):
    """Backend cannot serve the request (unreachable, not configured)."""


class MissingEmbeddingError(EmbeddingError):
    """A required vector (claim caption/image) is absent from the store."""


class UnresolvedReferenceError(EmbeddingError):
    """An image reference could not be resolved to readable bytes."""


class GenerationError(PipelineError):
    """Evidence generation failed after retry."""


class DetectorError(PipelineError):
    pass


class EmptyCandidatesError(DetectorError):
    """Reasoning selection got an empty candidate set; caller must fall back."""


class VerdictParseError(DetectorError):
    """LLM verdict response was neither of the expected literal tokens."""


class CalibrationError(DetectorError):
    """Validation split unusable for threshold calibration."""


class EvaluationError(PipelineError):
    pass


class CoverageError(EvaluationError):
    """Missing embeddings exceed the configured tolerance."""


class ConfigError(PipelineError):
    """Run configuration is invalid or incomplete."""
