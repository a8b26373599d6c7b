"""Metrics, clean-precision, sweeps, histograms, and report rendering."""

import numpy as np
import pytest

from oocguard.backends import HashEmbeddingBackend
from oocguard.corpus import Corpus, Kind, Label, Modality, Provenance, Split
from oocguard.detector import DetectorConfig, Strategy
from oocguard.embedding import EmbeddingStore, batch_embed, caption_key, image_key
from oocguard.errors import CoverageError, EvaluationError
from oocguard.evalharness import (
    EvalReport,
    Setting,
    clean_precision_at_k,
    compute_metrics,
    histogram_csv,
    paired_similarity_deltas,
    ratio_sweep,
    report_csv,
    report_text,
    rerank_eval,
    run_evaluation,
    similarity_delta_histogram,
    sweep_csv,
)
from oocguard.pollution import MockImageGenerator, MockTextGenerator, PollutionConfig, generate_pool

from conftest import make_claim, make_evidence

T, F = Label.TRUE, Label.FALSE


def test_metrics_hand_check():
    m = compute_metrics([T, T, F, F], [T, F, F, F])
    assert m.accuracy == pytest.approx(0.75)
    assert m.f1_true == pytest.approx(2 / 3, abs=1e-4)
    assert m.f1_false == pytest.approx(0.8, abs=1e-4)


def test_metrics_perfect_and_inverted():
    assert compute_metrics([T, F], [T, F]).accuracy == 1.0
    m = compute_metrics([T, F], [F, T])
    assert m.accuracy == 0.0
    assert m.f1_true == 0.0 and m.f1_false == 0.0


def test_metrics_absent_class_warns():
    with pytest.warns(UserWarning, match="absent"):
        m = compute_metrics([T, T], [T, T])
    assert m.f1_false == 0.0
    assert m.f1_true == 1.0


def test_metrics_errors():
    with pytest.raises(EvaluationError):
        compute_metrics([T], [T, F])
    with pytest.raises(EvaluationError):
        compute_metrics([], [])


def test_metrics_against_counting_oracle():
    import warnings

    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        labels = [T if rng.random() < 0.5 else F for _ in range(n)]
        preds = [T if rng.random() < 0.5 else F for _ in range(n)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # single-class draws warn by design
            m = compute_metrics(labels, preds)
        tp = sum(l is T and p is T for l, p in zip(labels, preds))
        fp = sum(l is F and p is T for l, p in zip(labels, preds))
        fn = sum(l is T and p is F for l, p in zip(labels, preds))
        expect_f1_true = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        assert m.f1_true == pytest.approx(expect_f1_true, abs=1e-12)
        assert m.accuracy == sum(l is p for l, p in zip(labels, preds)) / n


def test_clean_precision_hand_example():
    # [clean, generated, clean] at k=3 -> 2/3; second claim all generated
    result = clean_precision_at_k([[True, False, True], [False, False]], k=3)
    assert result.value == pytest.approx((2 / 3 + 0.0) / 2)
    assert result.n_claims == 2
    assert result.n_skipped == 0


def test_clean_precision_mean_of_claims():
    result = clean_precision_at_k([[True], [False]], k=1)
    assert result.value == pytest.approx(0.5)


def test_clean_precision_k_larger_than_list():
    result = clean_precision_at_k([[True, False]], k=10)
    assert result.value == pytest.approx(0.5)


def test_clean_precision_skips_empty_claims():
    result = clean_precision_at_k([[], [True]], k=1)
    assert result.value == 1.0
    assert result.n_claims == 1
    assert result.n_skipped == 1


def test_clean_precision_rejects_bad_k():
    with pytest.raises(EvaluationError):
        clean_precision_at_k([[True]], k=0)


def test_histogram_hand_example():
    hist = similarity_delta_histogram([-0.1, 0.0, 0.1], bins=2, value_range=(-0.1, 0.1))
    assert hist.counts == (1, 2)
    assert hist.out_of_range == 0
    assert hist.bin_edges == (-0.1, 0.0, 0.1)


def test_histogram_conservation_and_out_of_range():
    values = [-2.0, -0.5, 0.0, 0.5, 2.0]
    hist = similarity_delta_histogram(values, bins=4, value_range=(-1.0, 1.0))
    assert sum(hist.counts) + hist.out_of_range == hist.n_values == 5
    assert hist.out_of_range == 2


def test_histogram_errors():
    with pytest.raises(EvaluationError):
        similarity_delta_histogram([0.1], bins=0, value_range=(-1, 1))
    with pytest.raises(EvaluationError):
        similarity_delta_histogram([0.1], bins=2, value_range=(1, -1))
    with pytest.raises(EvaluationError):
        similarity_delta_histogram([], bins=2, value_range=(-1, 1))


def _eval_corpus():
    claims = [
        make_claim("c1", label=Label.TRUE),
        make_claim("c2", caption="another one", label=Label.FALSE),
    ]
    evidence = [
        make_evidence("t1", "c1", content="text one"),
        make_evidence("t2", "c2", content="text two"),
        make_evidence("i1", "c1", modality=Modality.IMAGE, content="img/1.png"),
        make_evidence("i2", "c2", modality=Modality.IMAGE, content="img/2.png"),
    ]
    return Corpus(claims, evidence)


def _store_for(corpus, tmp_path, dim=16):
    cache, report = batch_embed(corpus, HashEmbeddingBackend(dim=dim), tmp_path / "e.emb")
    assert not report.failures
    return EmbeddingStore(cache)


def test_run_evaluation_deterministic(tmp_path):
    corpus = _eval_corpus()
    store = _store_for(corpus, tmp_path)
    config = DetectorConfig(threshold=0.0)
    a = run_evaluation(corpus, store, config, Setting.CLEAN)
    b = run_evaluation(corpus, store, config, Setting.CLEAN)
    assert (a.accuracy, a.f1_true, a.f1_false) == (b.accuracy, b.f1_true, b.f1_false)
    assert [v.to_record(config.strategy) for v in a.verdicts] == [
        v.to_record(config.strategy) for v in b.verdicts
    ]
    assert [v.claim_id for v in a.verdicts] == ["c1", "c2"]
    assert a.n_claims == 2 and a.n_skipped == 0


def test_run_evaluation_delta_vs_clean(tmp_path):
    corpus = _eval_corpus()
    store = _store_for(corpus, tmp_path)
    config = DetectorConfig(threshold=0.0)
    baseline = run_evaluation(corpus, store, config, Setting.CLEAN)
    again = run_evaluation(
        corpus, store, config, Setting.POLLUTED_BOTH, clean_baseline=baseline
    )
    assert again.delta_vs_clean == (0.0, 0.0, 0.0)  # same corpus, zero delta
    assert baseline.delta_vs_clean is None


def test_run_evaluation_coverage_error(tmp_path):
    corpus = _eval_corpus()
    store = _store_for(corpus, tmp_path)
    # a third claim with no embeddings at all
    claims = list(corpus.claims) + [make_claim("c3", caption="missing")]
    bigger = Corpus(claims, list(corpus.evidence))
    config = DetectorConfig(threshold=0.0)
    with pytest.raises(CoverageError, match="1/3"):
        run_evaluation(bigger, store, config, Setting.CLEAN)
    report = run_evaluation(bigger, store, config, Setting.CLEAN, coverage_tolerance=0.5)
    assert report.n_skipped == 1 and report.n_claims == 2


def test_run_evaluation_split_filter(tmp_path):
    claims = [
        make_claim("c1", label=Label.TRUE, split=Split.TEST),
        make_claim("c2", caption="val claim", label=Label.FALSE, split=Split.VALIDATION),
    ]
    corpus = Corpus(claims, [])
    store = _store_for(corpus, tmp_path)
    config = DetectorConfig(threshold=-1.0)
    with pytest.warns(UserWarning, match="absent"):  # one class after filtering
        report = run_evaluation(corpus, store, config, Setting.CLEAN, split=Split.TEST)
    assert report.n_claims == 1
    with pytest.raises(EvaluationError):
        run_evaluation(corpus, store, config, Setting.CLEAN, split=Split.TRAIN)


def test_ratio_sweep_zero_equals_clean(tmp_path):
    corpus = _eval_corpus()
    pcfg = PollutionConfig(ratio=1.0, seed=42)
    pool = generate_pool(corpus, pcfg, MockTextGenerator(42), MockImageGenerator(42)).items
    extended = Corpus(corpus.claims, list(corpus.evidence) + pool)
    store = _store_for(extended, tmp_path)
    config = DetectorConfig(threshold=0.0)
    clean = run_evaluation(corpus, store, config, Setting.CLEAN)
    points = ratio_sweep(
        corpus,
        pool,
        store,
        config,
        seed=42,
        modalities=frozenset({Modality.TEXT, Modality.IMAGE}),
        ratios=(0.0, 1.0),
    )
    assert points[0].accuracy == clean.accuracy
    assert points[0].f1_true == clean.f1_true
    assert points[0].f1_false == clean.f1_false
    assert [p.ratio for p in points] == [0.0, 1.0]


def test_rerank_eval_prefers_aligned_clean(tmp_path):
    # clean text vector equals the claim image vector, so rerank puts it first
    claims = [make_claim("c1")]
    evidence = [
        make_evidence("t1", "c1", content="clean"),
        make_evidence(
            "g-t1",
            "c1",
            content="gen",
            provenance=Provenance.GENERATED,
            kind=Kind.ENTITY,
        ),
    ]
    corpus = Corpus(claims, evidence)
    from oocguard.embedding import EmbeddingCache

    cache = EmbeddingCache(dim=2)
    cache.put(caption_key("c1"), np.array([1.0, 0.0], dtype=np.float32))
    cache.put(image_key("c1"), np.array([0.0, 1.0], dtype=np.float32))
    cache.put("t1", np.array([0.0, 1.0], dtype=np.float32))
    cache.put("g-t1", np.array([1.0, 0.0], dtype=np.float32))
    rows = rerank_eval(corpus, EmbeddingStore(cache), ks=(1, 2))
    text_row = rows[0]
    assert text_row.evidence_modality == "text"
    assert text_row.precision_at[1] == 1.0
    assert text_row.precision_at[2] == 0.5


def test_paired_similarity_deltas_pairs_in_order(tmp_path):
    claims = [make_claim("c1")]
    evidence = [
        make_evidence("t1", "c1", content="clean text"),
        make_evidence(
            "g-t1", "c1", content="gen text", provenance=Provenance.GENERATED, kind=Kind.SUPPORT
        ),
    ]
    corpus = Corpus(claims, evidence)
    from oocguard.embedding import EmbeddingCache, cosine

    cache = EmbeddingCache(dim=2)
    query = np.array([1.0, 0.0], dtype=np.float32)
    cache.put(caption_key("c1"), np.array([0.5, 0.5], dtype=np.float32))
    cache.put(image_key("c1"), query)
    clean_vec = np.array([1.0, 1.0], dtype=np.float32)
    gen_vec = np.array([1.0, 0.2], dtype=np.float32)
    cache.put("t1", clean_vec)
    cache.put("g-t1", gen_vec)
    deltas = paired_similarity_deltas(corpus, EmbeddingStore(cache), Modality.TEXT)
    assert deltas == [pytest.approx(cosine(query, gen_vec) - cosine(query, clean_vec))]


def test_report_csv_format():
    reports = [
        EvalReport(Setting.POLLUTED_TEXT, Strategy.RERANK, 0.7, 0.6, 0.75, 4,
                   delta_vs_clean=(-0.05, -0.1, 0.0)),
        EvalReport(Setting.CLEAN, Strategy.NONE, 0.75, 2 / 3, 0.8, 4),
    ]
    out = report_csv(reports)
    lines = out.splitlines()
    assert lines[0] == "setting,strategy,accuracy,f1_true,f1_false,d_acc,d_f1_true,d_f1_false"
    # canonical order puts clean first regardless of input order
    assert lines[1] == "clean,none,0.750000,0.666667,0.800000,,,"
    assert lines[2] == "polluted_text,rerank,0.700000,0.600000,0.750000,-0.050000,-0.100000,0.000000"
    assert out.endswith("\n")


def test_report_text_arrows():
    reports = [
        EvalReport(Setting.CLEAN, Strategy.NONE, 0.83, 0.8, 0.85, 4,
                   delta_vs_clean=(0.0, 0.0, 0.0)),
        EvalReport(Setting.POLLUTED_BOTH, Strategy.NONE, 0.7050, 0.6, 0.9, 4,
                   delta_vs_clean=(-0.125, -0.2, 0.05)),
    ]
    out = report_text(reports)
    assert "83.00 (=0.00)" in out
    assert "70.50 (↓12.50)" in out
    assert "(↑5.00)" in out


def test_sweep_csv_format():
    from oocguard.evalharness import SweepPoint

    out = sweep_csv([SweepPoint(0.25, 0.8, 0.75, 0.85)])
    assert out == "ratio,accuracy,f1_true,f1_false\n0.25,0.800000,0.750000,0.850000\n"


def test_histogram_csv_format():
    hist = similarity_delta_histogram([-0.1, 0.0, 0.1], bins=2, value_range=(-0.1, 0.1))
    out = histogram_csv(hist)
    assert out == (
        "bin_lo,bin_hi,count\n"
        "-0.100000,0.000000,1\n"
        "0.000000,0.100000,2\n"
    )
