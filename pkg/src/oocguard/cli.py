"""Command line interface: pollute, embed, eval, stats, histogram.

Every command reads one config file (flat dotted keys) plus overriding
flags, writes its outputs under the configured run directory, and keeps
`manifest.json` there up to date with the files it produced. Exit code 0
means every declared output was written and coverage thresholds held; every
failure class exits nonzero with a single-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .backends import HashEmbeddingBackend, RemoteEmbeddingBackend
from .config import RunConfig, load_run_config
from .corpus import (
    Corpus,
    Modality,
    Split,
    corpus_stats,
    load_corpus,
    load_evidence,
    save_corpus,
    save_evidence,
)
from .detector import best_threshold, write_verdicts_jsonl
from .embedding import EmbeddingCache, EmbeddingStore, batch_embed, caption_key, image_key
from .errors import ConfigError, PipelineError
from .evalharness import (
    Setting,
    histogram_csv,
    paired_similarity_deltas,
    ratio_sweep,
    report_csv,
    report_text,
    run_evaluation,
    similarity_delta_histogram,
    sweep_csv,
)
from .pollution import (
    MockImageGenerator,
    MockTextGenerator,
    RemoteImageGenerator,
    RemoteTextGenerator,
    generate_pool,
    inject,
    write_generation_log,
)
from .strategies import rerank_image_evidence, rerank_text_evidence, write_ranked_jsonl


def _update_run_manifest(run_dir: Path, command: str, files: list[Path]) -> Path:
    """Record produced files per command; deterministic, no timestamps."""
    manifest_path = run_dir / "manifest.json"
    data: dict[str, list[str]] = {}
    if manifest_path.exists():
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    rel = []
    for f in files:
        try:
            rel.append(str(f.relative_to(run_dir)))
        except ValueError:
            rel.append(str(f))
    data[command] = sorted(rel)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest_path


def _load_corpus(cfg: RunConfig) -> Corpus:
    claims = cfg.require_path("corpus.claims")
    evidence = cfg.require_path("corpus.evidence")
    return load_corpus(claims, evidence, strict=cfg.strict)


def _load_pool(cfg: RunConfig, required: bool):
    pool_path = cfg.pool_path
    if pool_path is None or not pool_path.exists():
        if required:
            raise ConfigError(
                "pollution.pool manifest is required for this command and was not found"
            )
        return []
    return load_evidence(pool_path, strict=cfg.strict)


def _extended_corpus(corpus: Corpus, pool) -> Corpus:
    return Corpus(corpus.claims, list(corpus.evidence) + list(pool))


def _load_cache(cfg: RunConfig) -> EmbeddingCache:
    path = cfg.cache_path
    if not path.exists():
        raise ConfigError(f"embedding cache not found: {path} (run embed first)")
    return EmbeddingCache.load(path)


def cmd_pollute(cfg: RunConfig) -> int:
    corpus = _load_corpus(cfg)
    pcfg = cfg.pollution_config()
    run_dir = cfg.run_dir
    if pcfg.generator == "remote":
        endpoint = cfg.endpoint
        text_gen = RemoteTextGenerator(endpoint, seed=cfg.seed)
        image_gen = RemoteImageGenerator(
            endpoint,
            seed=cfg.seed,
            out_dir=run_dir / "generated_images",
            images_root=cfg.images_root,
        )
    else:
        text_gen = MockTextGenerator(cfg.seed)
        image_gen = MockImageGenerator(cfg.seed)

    result = generate_pool(corpus, pcfg, text_gen, image_gen)
    for source_id, reason in result.failures:
        print(f"generation failed for {source_id}: {reason}", file=sys.stderr)

    pool_path = run_dir / "pool.jsonl"
    save_evidence(pool_path, (item.to_record() for item in result.items))
    log_path = write_generation_log(run_dir / "generation_log.jsonl", result.records)
    polluted = inject(corpus, result.items, pcfg)
    claims_path, evidence_path = save_corpus(polluted, run_dir / "polluted")

    stats = corpus_stats(polluted)
    stats_path = run_dir / "pollute_stats.csv"
    stats_path.write_text(stats.to_csv(), encoding="utf-8")
    print(stats.to_text())
    print(
        f"pool: {len(result.items)} generated items, {len(result.failures)} failures; "
        f"injected {len(polluted.evidence) - len(corpus.evidence)} at ratio {pcfg.ratio:g}"
    )
    _update_run_manifest(
        run_dir, "pollute", [pool_path, log_path, claims_path, evidence_path, stats_path]
    )
    return 1 if result.failures else 0


def cmd_embed(cfg: RunConfig) -> int:
    corpus = _load_corpus(cfg)
    pool = _load_pool(cfg, required=False)
    target = _extended_corpus(corpus, pool) if pool else corpus
    if cfg.backend_kind == "remote":
        backend = RemoteEmbeddingBackend(
            cfg.endpoint,
            images_root=cfg.images_root,
            batch_size=cfg.backend_batch_size,
        )
    else:
        backend = HashEmbeddingBackend(dim=cfg.backend_dim, salt=cfg.seed)
    cache_path = cfg.cache_path
    cache, report = batch_embed(target, backend, cache_path, jobs=cfg.jobs)
    for item_id, reason in report.failures:
        print(f"embedding failed for {item_id}: {reason}", file=sys.stderr)
    print(
        f"cache {cache_path}: {len(cache)} vectors (dim {cache.dim}); "
        f"new {report.embedded}, cached {report.skipped_existing}, "
        f"failed {len(report.failures)}; coverage {report.coverage * 100:.1f}%"
    )
    _update_run_manifest(cfg.run_dir, "embed", [cache_path])
    if report.coverage < 1.0 - cfg.coverage_tolerance:
        print(
            f"error: coverage {report.coverage * 100:.1f}% below tolerance",
            file=sys.stderr,
        )
        return 1
    return 0


def _calibrated_threshold(cfg: RunConfig, corpus: Corpus, store: EmbeddingStore) -> float:
    detector = cfg.detector_config()
    report = run_evaluation(
        corpus,
        store,
        detector,
        Setting.CLEAN,
        coverage_tolerance=cfg.coverage_tolerance,
        split=Split.VALIDATION,
    )
    labels = [corpus.claim(v.claim_id).label for v in report.verdicts]
    scores = [v.fused_score for v in report.verdicts]
    return best_threshold(labels, scores)


def cmd_eval(cfg: RunConfig, sweep: bool = False) -> int:
    corpus = _load_corpus(cfg)
    settings = cfg.settings
    needs_pool = sweep or any(s is not Setting.CLEAN for s in settings)
    pool = _load_pool(cfg, required=needs_pool)
    store = EmbeddingStore(_load_cache(cfg))
    detector = cfg.detector_config()
    if cfg.calibrate:
        tau = _calibrated_threshold(cfg, corpus, store)
        detector = replace(detector, threshold=tau)
        print(f"calibrated threshold: {tau:.2f}")

    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []

    baseline = run_evaluation(
        corpus,
        store,
        detector,
        Setting.CLEAN,
        coverage_tolerance=cfg.coverage_tolerance,
        split=cfg.eval_split,
    )
    reports = []
    for setting in settings:
        if setting is Setting.CLEAN:
            # deltas of clean vs itself are exactly zero
            report = replace(baseline, delta_vs_clean=(0.0, 0.0, 0.0))
            evaluated = corpus
        else:
            pcfg = cfg.pollution_config(modalities=setting.modalities)
            evaluated = inject(corpus, pool, pcfg)
            report = run_evaluation(
                evaluated,
                store,
                detector,
                setting,
                clean_baseline=baseline,
                coverage_tolerance=cfg.coverage_tolerance,
                split=cfg.eval_split,
            )
        reports.append(report)
        verdict_path = run_dir / f"verdicts_{setting.value}_{detector.strategy.value}.jsonl"
        write_verdicts_jsonl(verdict_path, report.verdicts, detector.strategy)
        outputs.append(verdict_path)
        if detector.strategy.reranks:
            outputs.append(_write_rankings(run_dir, setting, evaluated, store))

    report_path = run_dir / "report.csv"
    report_path.write_text(report_csv(reports), encoding="utf-8")
    text_path = run_dir / "report.txt"
    text_path.write_text(report_text(reports), encoding="utf-8")
    outputs.extend([report_path, text_path])
    print(report_text(reports))

    if sweep:
        sweep_setting = next(
            (s for s in settings if s is not Setting.CLEAN), Setting.POLLUTED_BOTH
        )
        points = ratio_sweep(
            corpus,
            pool,
            store,
            detector,
            seed=cfg.seed,
            modalities=sweep_setting.modalities,
            ratios=cfg.sweep_ratios,
            coverage_tolerance=cfg.coverage_tolerance,
            split=cfg.eval_split,
        )
        sweep_path = run_dir / "sweep.csv"
        sweep_path.write_text(sweep_csv(points), encoding="utf-8")
        outputs.append(sweep_path)
        print(sweep_csv(points))

    _update_run_manifest(run_dir, "eval", outputs)
    return 0


def _write_rankings(run_dir: Path, setting: Setting, corpus: Corpus, store: EmbeddingStore) -> Path:
    rankings = []
    for claim in corpus.claims:
        ck, ik = caption_key(claim.id), image_key(claim.id)
        if ck not in store or ik not in store:
            continue
        texts = [(e.id, store.get(e.id)) for e in corpus.texts_for(claim.id) if e.id in store]
        images = [(e.id, store.get(e.id)) for e in corpus.images_for(claim.id) if e.id in store]
        if texts:
            rankings.append((claim.id, "text", rerank_text_evidence(store.get(ik), texts)))
        if images:
            rankings.append((claim.id, "image", rerank_image_evidence(store.get(ck), images)))
    return write_ranked_jsonl(run_dir / f"rankings_{setting.value}.jsonl", rankings)


def cmd_stats(cfg: RunConfig) -> int:
    corpus = _load_corpus(cfg)
    stats = corpus_stats(corpus)
    run_dir = cfg.run_dir
    stats_path = run_dir / "stats.csv"
    stats_path.parent.mkdir(parents=True, exist_ok=True)
    stats_path.write_text(stats.to_csv(), encoding="utf-8")
    print(stats.to_text())
    _update_run_manifest(run_dir, "stats", [stats_path])
    return 0


def cmd_histogram(cfg: RunConfig) -> int:
    corpus = _load_corpus(cfg)
    pool = _load_pool(cfg, required=False)
    target = _extended_corpus(corpus, pool) if pool else corpus
    store = EmbeddingStore(_load_cache(cfg))
    deltas = paired_similarity_deltas(target, store, cfg.histogram_modality)
    hist = similarity_delta_histogram(deltas, cfg.histogram_bins, cfg.histogram_range)
    run_dir = cfg.run_dir
    hist_path = run_dir / "histogram.csv"
    hist_path.parent.mkdir(parents=True, exist_ok=True)
    hist_path.write_text(histogram_csv(hist), encoding="utf-8")
    print(histogram_csv(hist))
    print(f"pairs: {hist.n_values}, out of range: {hist.out_of_range}")
    _update_run_manifest(run_dir, "histogram", [hist_path])
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the run config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--run-dir", help="override run_dir")
    parser.add_argument("--jobs", type=int, help="bound on concurrent backend requests")
    parser.add_argument(
        "--lenient",
        action="store_true",
        help="warn on unknown manifest fields instead of failing",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oocguard",
        description="Simulate generated-evidence pollution and evaluate hardened detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pollute", help="generate a pollution pool and inject it")
    _add_common(p)
    p.add_argument("--ratio", type=float, help="override pollution.ratio")
    p.add_argument("--generator", choices=["mock", "remote"], help="override pollution.generator")
    p.add_argument("--endpoint", help="override the generation backend endpoint")

    p = sub.add_parser("embed", help="embed corpus (and pool) into the cache file")
    _add_common(p)
    p.add_argument("--backend", choices=["mock", "remote"], help="override backend.kind")
    p.add_argument("--endpoint", help="override the embedding backend endpoint")

    p = sub.add_parser("eval", help="evaluate the detector across pollution settings")
    _add_common(p)
    p.add_argument(
        "--strategy",
        choices=["none", "rerank", "reason", "both"],
        help="override detector.strategy",
    )
    p.add_argument(
        "--setting",
        choices=["clean", "text", "image", "both"],
        help="evaluate a single setting instead of eval.settings",
    )
    p.add_argument("--ratio", type=float, help="override pollution.ratio")
    p.add_argument("--sweep", action="store_true", help="also run the ratio sweep")
    p.add_argument(
        "--calibrate",
        action="store_true",
        help="calibrate the threshold on the validation split first",
    )

    p = sub.add_parser("stats", help="print corpus statistics")
    _add_common(p)

    p = sub.add_parser("histogram", help="clean vs generated similarity delta histogram")
    _add_common(p)
    p.add_argument("--modality", choices=["text", "image"], help="evidence modality")
    p.add_argument("--bins", type=int, help="override histogram.bins")
    p.add_argument("--range", dest="hist_range", help="override histogram.range as 'lo,hi'")

    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict[str, str]:
    mapping = {
        "seed": "seed",
        "run_dir": "run_dir",
        "jobs": "jobs",
        "ratio": "pollution.ratio",
        "generator": "pollution.generator",
        "backend": "backend.kind",
        "endpoint": "backend.endpoint.flag",
        "strategy": "detector.strategy",
        "modality": "histogram.modality",
        "bins": "histogram.bins",
        "hist_range": "histogram.range",
    }
    overrides: dict[str, str] = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "lenient", False):
        overrides["corpus.strict"] = "false"
    if getattr(args, "setting", None):
        overrides["eval.settings"] = args.setting
    if getattr(args, "calibrate", False):
        overrides["eval.calibrate"] = "true"
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, _overrides_from_args(args))
        cfg.run_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "pollute":
            return cmd_pollute(cfg)
        if args.command == "embed":
            return cmd_embed(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, sweep=args.sweep)
        if args.command == "stats":
            return cmd_stats(cfg)
        if args.command == "histogram":
            return cmd_histogram(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
