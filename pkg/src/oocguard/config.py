"""Run configuration: a flat dotted-key config file, with flags on top.

The file is plain `key = value` lines; `#` starts a full-line comment.
Values stay strings until a typed accessor coerces them, so error messages
can name the offending key. Flags always win over file values; for the
backend endpoint the precedence is flag > OOCGUARD_ENDPOINT env var > file.

Seeds are mandatory: nothing in the pipeline ever falls back to wall-clock
randomness.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Kind, Modality, Split, TEXT_KINDS
from .detector import COMPONENTS, DetectorConfig, Strategy
from .errors import ConfigError
from .evalharness import Setting
from .pollution import PollutionConfig

ENDPOINT_ENV = "OOCGUARD_ENDPOINT"
MAX_JOBS = 64

_SETTING_ALIASES = {
    "clean": Setting.CLEAN,
    "text": Setting.POLLUTED_TEXT,
    "image": Setting.POLLUTED_IMAGE,
    "both": Setting.POLLUTED_BOTH,
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            if not key:
                raise ConfigError(f"{path}:{line_no}: empty key")
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            values[key] = value
    return values


def _coerce_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _coerce_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _coerce_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key} must be true/false, got {value!r}")


def _split_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


@dataclass
class RunConfig:
    """Validated view over file values + flag overrides."""

    raw: dict[str, str]
    config_dir: Path = field(default_factory=Path)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.raw.get(key, default)

    def _path(self, key: str, default: str | None = None) -> Path | None:
        value = self.raw.get(key, default)
        if value is None:
            return None
        path = Path(value)
        if not path.is_absolute():
            path = self.config_dir / path
        return path

    def require_path(self, key: str, must_exist: bool = True) -> Path:
        path = self._path(key)
        if path is None:
            raise ConfigError(f"missing required config key {key!r}")
        if must_exist and not path.exists():
            raise ConfigError(f"{key} path does not exist: {path}")
        return path

    @property
    def seed(self) -> int:
        value = self.raw.get("seed")
        if value is None:
            raise ConfigError("seed is mandatory; set 'seed' in the config or pass --seed")
        return _coerce_int("seed", value)

    @property
    def run_dir(self) -> Path:
        value = self.raw.get("run_dir")
        if value is None:
            raise ConfigError("missing required config key 'run_dir'")
        path = Path(value)
        if not path.is_absolute():
            path = self.config_dir / path
        return path

    @property
    def strict(self) -> bool:
        return _coerce_bool("corpus.strict", self.raw.get("corpus.strict", "true"))

    @property
    def images_root(self) -> Path | None:
        return self._path("corpus.images_root")

    @property
    def jobs(self) -> int:
        jobs = _coerce_int("jobs", self.raw.get("jobs", "1"))
        if jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        return min(jobs, MAX_JOBS)

    @property
    def backend_kind(self) -> str:
        kind = self.raw.get("backend.kind", "mock")
        if kind not in ("mock", "remote"):
            raise ConfigError(f"backend.kind must be mock or remote, got {kind!r}")
        return kind

    @property
    def backend_dim(self) -> int:
        dim = _coerce_int("backend.dim", self.raw.get("backend.dim", "32"))
        if dim < 1:
            raise ConfigError(f"backend.dim must be >= 1, got {dim}")
        return dim

    @property
    def backend_batch_size(self) -> int:
        return _coerce_int("backend.batch_size", self.raw.get("backend.batch_size", "128"))

    @property
    def endpoint(self) -> str:
        # flag override lands in raw before this is read; env beats the file
        if "backend.endpoint.flag" in self.raw:
            return self.raw["backend.endpoint.flag"]
        env = os.environ.get(ENDPOINT_ENV)
        if env:
            return env
        value = self.raw.get("backend.endpoint")
        if not value:
            raise ConfigError(
                f"backend.endpoint missing (set it, or export {ENDPOINT_ENV})"
            )
        return value

    @property
    def cache_path(self) -> Path:
        configured = self._path("cache.path")
        if configured is not None:
            return configured
        return self.run_dir / "embeddings.emb"

    @property
    def coverage_tolerance(self) -> float:
        value = _coerce_float(
            "coverage_tolerance", self.raw.get("coverage_tolerance", "0")
        )
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"coverage_tolerance must be in [0, 1], got {value}")
        return value

    @property
    def pool_path(self) -> Path | None:
        return self._path("pollution.pool")

    def pollution_config(self, modalities: frozenset[Modality] | None = None) -> PollutionConfig:
        ratio = _coerce_float("pollution.ratio", self.raw.get("pollution.ratio", "1.0"))
        if modalities is None:
            names = _split_list(self.raw.get("pollution.modalities", "text,image"))
            try:
                modalities = frozenset(Modality(name) for name in names)
            except ValueError:
                raise ConfigError(
                    f"pollution.modalities must be drawn from text,image; got {names}"
                ) from None
        weights: dict[Kind, float] = {}
        for kind in TEXT_KINDS:
            key = f"pollution.kinds.{kind.value}"
            weights[kind] = _coerce_float(key, self.raw.get(key, "1.0"))
        generator = self.raw.get("pollution.generator", "mock")
        return PollutionConfig(
            ratio=ratio,
            seed=self.seed,
            modalities=modalities,
            text_kind_weights=weights,
            generator=generator,
        )

    def detector_config(self) -> DetectorConfig:
        strategy_name = self.raw.get("detector.strategy", "none")
        try:
            strategy = Strategy(strategy_name)
        except ValueError:
            raise ConfigError(
                f"detector.strategy must be one of none/rerank/reason/both, got {strategy_name!r}"
            ) from None
        weights = {}
        for name in COMPONENTS:
            key = f"detector.weights.{name}"
            weights[name] = _coerce_float(key, self.raw.get(key, "1.0"))
        return DetectorConfig(
            threshold=_coerce_float(
                "detector.threshold", self.raw.get("detector.threshold", "0.5")
            ),
            k_text=_coerce_int("detector.k_text", self.raw.get("detector.k_text", "1")),
            k_image=_coerce_int("detector.k_image", self.raw.get("detector.k_image", "5")),
            strategy=strategy,
            weights=weights,
        )

    @property
    def settings(self) -> list[Setting]:
        names = _split_list(self.raw.get("eval.settings", "clean,text,image,both"))
        settings = []
        for name in names:
            if name not in _SETTING_ALIASES:
                raise ConfigError(
                    f"eval.settings entries must be clean/text/image/both, got {name!r}"
                )
            settings.append(_SETTING_ALIASES[name])
        if not settings:
            raise ConfigError("eval.settings selected no settings")
        return settings

    @property
    def sweep_ratios(self) -> list[float]:
        raw = self.raw.get("eval.sweep_ratios", "0,0.25,0.5,0.75,1.0")
        ratios = [_coerce_float("eval.sweep_ratios", part) for part in _split_list(raw)]
        if not ratios:
            raise ConfigError("eval.sweep_ratios selected no ratios")
        for ratio in ratios:
            if not 0.0 <= ratio <= 1.0:
                raise ConfigError(f"sweep ratio out of range: {ratio}")
        return ratios

    @property
    def calibrate(self) -> bool:
        return _coerce_bool("eval.calibrate", self.raw.get("eval.calibrate", "false"))

    @property
    def eval_split(self) -> Split | None:
        value = self.raw.get("eval.split")
        if value is None:
            return None
        try:
            return Split(value)
        except ValueError:
            raise ConfigError(
                f"eval.split must be train/validation/test, got {value!r}"
            ) from None

    @property
    def histogram_bins(self) -> int:
        bins = _coerce_int("histogram.bins", self.raw.get("histogram.bins", "40"))
        if bins < 1:
            raise ConfigError(f"histogram.bins must be >= 1, got {bins}")
        return bins

    @property
    def histogram_range(self) -> tuple[float, float]:
        raw = self.raw.get("histogram.range", "-1.0,1.0")
        parts = _split_list(raw)
        if len(parts) != 2:
            raise ConfigError(f"histogram.range must be 'lo,hi', got {raw!r}")
        lo = _coerce_float("histogram.range", parts[0])
        hi = _coerce_float("histogram.range", parts[1])
        if not lo < hi:
            raise ConfigError(f"histogram.range must satisfy lo < hi, got {raw!r}")
        return lo, hi

    @property
    def histogram_modality(self) -> Modality:
        value = self.raw.get("histogram.modality", "text")
        try:
            return Modality(value)
        except ValueError:
            raise ConfigError(
                f"histogram.modality must be text or image, got {value!r}"
            ) from None


def load_run_config(config_path: str | Path, overrides: dict[str, str]) -> RunConfig:
    """File values with flag overrides applied on top (flags win)."""
    path = Path(config_path)
    values = parse_config_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(raw=values, config_dir=path.resolve().parent)
