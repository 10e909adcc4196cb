"""Eval harness: manifests, calibration oracles, PRF, aggregates."""

from __future__ import annotations

import random

import pytest

from citegate.errors import RejectedInput, UndefinedMetric
from citegate.harness import (
    CATEGORIES,
    Question,
    RunConfig,
    aggregate_efficiency,
    build_manifest,
    citation_prf,
    compute_aurc,
    compute_ece,
    coverage_novelty,
    execute_run,
    isotonic_calibrate,
    make_semantic_matcher,
    nearest_rank,
    normalize_gold_source,
    risk_coverage_points,
    run_sweep,
    write_csv,
)
from citegate.retrieval import HashingEmbedder

from conftest import happy_scripts, scripted_engine
from test_engine import kb


def questions(n: int) -> list[Question]:
    return [
        Question(f"q{i:03d}", CATEGORIES[i % len(CATEGORIES)], f"question number {i}")
        for i in range(n)
    ]


# -- manifest ------------------------------------------------------------------


def test_manifest_full_grid_1080():
    factors = {
        "knowledge_model": ["o3", "o4-mini"],
        "retrieval_k": [4, 8, 12],
        "reasoning_level": ["low", "medium", "high"],
    }
    manifest = build_manifest(factors, questions(60), seed=7)
    assert len(manifest) == 1080


def test_manifest_deterministic_under_seed():
    factors = {"retrieval_k": [4, 8], "reasoning_level": ["low", "high"]}
    a = build_manifest(factors, questions(5), seed=42)
    b = build_manifest(factors, questions(5), seed=42)
    assert a == b
    c = build_manifest(factors, questions(5), seed=43)
    assert a != c


def test_manifest_singleton():
    factors = {
        "relevance_model": ["m"],
        "confidence_model": ["m"],
        "knowledge_model": ["m"],
        "retrieval_k": [4],
        "reasoning_level": ["low"],
    }
    manifest = build_manifest(factors, questions(1), seed=0)
    assert len(manifest) == 1


def test_manifest_is_per_question_permutation():
    factors = {"retrieval_k": [4, 8, 12], "reasoning_level": ["low", "high"]}
    manifest = build_manifest(factors, questions(3), seed=1)
    per_question = [
        [(r.retrieval_k, r.reasoning_level) for r in manifest if r.question_id == q.question_id]
        for q in questions(3)
    ]
    grid = {(k, lvl) for k in (4, 8, 12) for lvl in ("low", "high")}
    for combos in per_question:
        assert set(combos) == grid
        assert len(combos) == 6


def test_question_category_validated():
    with pytest.raises(RejectedInput):
        Question("q1", "unheard_of", "text")


# -- ECE ------------------------------------------------------------------------


def test_ece_perfectly_calibrated_single_bin():
    # 10 items at confidence 0.8, exactly 8 correct -> gap 0 in that bin
    records = [(0.8, i < 8) for i in range(10)]
    assert compute_ece(records) < 1e-12


def test_ece_two_certain_items_half_wrong():
    records = [(1.0, True), (1.0, False)]
    assert compute_ece(records) == pytest.approx(0.5)


def ece_oracle(records, bins=10):
    """Independent bin loop: assign each record, then re-walk the bins."""
    assigned = [[] for _ in range(bins)]
    for conf, ok in records:
        b = min(int(conf * bins), bins - 1)
        assigned[b].append((conf, ok))
    total = len(records)
    out = 0.0
    for members in assigned:
        if not members:
            continue
        mc = sum(c for c, _ in members) / len(members)
        acc = sum(1 for _, ok in members if ok) / len(members)
        out += len(members) / total * abs(mc - acc)
    return out


def test_ece_matches_bin_loop_oracle():
    rng = random.Random(3)
    for _ in range(200):
        records = [
            (rng.random(), rng.random() < 0.5) for _ in range(rng.randint(1, 50))
        ]
        assert compute_ece(records) == pytest.approx(ece_oracle(records), abs=1e-12)


def test_ece_empty_is_undefined():
    with pytest.raises(UndefinedMetric):
        compute_ece([])


def test_ece_rejects_out_of_range():
    with pytest.raises(RejectedInput):
        compute_ece([(1.5, True)])


# -- AURC -----------------------------------------------------------------------


def test_aurc_all_correct_is_zero():
    assert compute_aurc([(0.9, True), (0.5, True), (0.1, True)]) == 0.0


def test_aurc_hand_example():
    # points: (0.5, 0) and (1.0, 0.5); trapezoid = 0.5 * (0 + 0.5) / 2 = 0.125
    records = [(0.9, True), (0.1, False)]
    assert risk_coverage_points(records) == [(0.5, 0.0), (1.0, 0.5)]
    assert compute_aurc(records) == pytest.approx(0.125)


def aurc_oracle(records):
    ordered = sorted(enumerate(records), key=lambda p: (-p[1][0], p[0]))
    n = len(records)
    pts = []
    wrong = 0
    for i, (_, (_, ok)) in enumerate(ordered, 1):
        wrong += 0 if ok else 1
        pts.append((i / n, wrong / i))
    area = 0.0
    for (c0, r0), (c1, r1) in zip(pts, pts[1:]):
        area += (c1 - c0) * (r0 + r1) / 2
    return area


def test_aurc_matches_prefix_enumeration_oracle():
    rng = random.Random(9)
    for _ in range(100):
        records = [
            (rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]), rng.random() < 0.6)
            for _ in range(rng.randint(1, 20))
        ]
        assert compute_aurc(records) == aurc_oracle(records)


def test_aurc_ranking_property():
    outcomes = [True, True, False, False]
    aligned = list(zip([0.9, 0.8, 0.2, 0.1], outcomes))
    inverted = list(zip([0.1, 0.2, 0.8, 0.9], outcomes))
    assert compute_aurc(inverted) >= compute_aurc(aligned)


def test_aurc_empty_is_undefined():
    with pytest.raises(UndefinedMetric):
        compute_aurc([])


# -- isotonic ----------------------------------------------------------------------


def test_isotonic_monotone_fixed_point():
    records = [(0.2, False), (0.2, False), (0.5, True), (0.5, False), (0.9, True)]
    mapping = isotonic_calibrate(records)
    assert list(mapping.values) == sorted(mapping.values)
    # already-monotone block accuracies stay put: 0.0, 0.5, 1.0
    assert mapping.apply(0.2) == 0.0
    assert mapping.apply(0.5) == 0.5
    assert mapping.apply(0.9) == 1.0


def test_isotonic_pools_violation_to_half():
    mapping = isotonic_calibrate([(0.9, False), (0.1, True)])
    assert mapping.apply(0.1) == 0.5
    assert mapping.apply(0.9) == 0.5


def test_isotonic_reduces_ece_on_overconfident_fixture():
    rng = random.Random(13)
    records = [(1.0, rng.random() < 0.5) for _ in range(40)]
    records += [(0.75, rng.random() < 0.4) for _ in range(40)]
    pre = compute_ece(records)
    mapping = isotonic_calibrate(records)
    post = compute_ece([(mapping(c), ok) for c, ok in records])
    assert post <= pre
    assert post < 1e-12  # calibrated scores equal block accuracies


def test_isotonic_never_raises_fitting_ece_randomized():
    rng = random.Random(31)
    for _ in range(50):
        records = [
            (rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]), rng.random() < 0.5)
            for _ in range(rng.randint(2, 60))
        ]
        mapping = isotonic_calibrate(records)
        assert list(mapping.values) == sorted(mapping.values)
        pre = compute_ece(records)
        post = compute_ece([(mapping(c), ok) for c, ok in records])
        assert post <= pre + 1e-12


def test_isotonic_degenerate_single_confidence():
    mapping = isotonic_calibrate([(0.5, True), (0.5, False), (0.5, False)])
    assert mapping.apply(0.5) == pytest.approx(1 / 3)
    assert mapping.apply(0.9) == pytest.approx(1 / 3)


def test_isotonic_needs_two_records():
    with pytest.raises(UndefinedMetric):
        isotonic_calibrate([(0.5, True)])


# -- citation PRF -----------------------------------------------------------------


def test_prf_hand_example():
    p, r, f1, matched = citation_prf(["A", "B", "C"], ["A"])
    assert (p, r, f1, matched) == (pytest.approx(1 / 3), 1.0, pytest.approx(0.5), 1)


def test_prf_identity():
    assert citation_prf(["A"], ["A"]) == (1.0, 1.0, 1.0, 1)


def test_prf_vacuous_conventions():
    p, r, f1, matched = citation_prf([], ["A"])
    assert (p, r, f1, matched) == (1.0, 0.0, 0.0, 0)
    p, r, f1, matched = citation_prf(["A"], [])
    assert (p, r) == (0.0, 1.0)


def test_prf_matching_is_maximum():
    # "x" matches both golds; "y" matches only g1: max matching pairs
    # x->g2 and y->g1 (size 2), greedy x->g1 would block y
    def matcher(a, b):
        return (a, b) in {("x", "g1"), ("x", "g2"), ("y", "g1")}

    p, r, f1, matched = citation_prf(["x", "y"], ["g1", "g2"], matcher)
    assert matched == 2


def test_prf_order_invariant():
    rng = random.Random(17)
    pred = ["a", "b", "c", "d"]
    gold = ["b", "c", "z"]
    baseline = citation_prf(pred, gold)
    for _ in range(5):
        p = pred[:]
        g = gold[:]
        rng.shuffle(p)
        rng.shuffle(g)
        assert citation_prf(p, g) == baseline


def test_semantic_matcher_title_and_embedding():
    embedder = HashingEmbedder(dim=64)
    matcher = make_semantic_matcher(embedder, threshold=0.8)
    assert matcher("Thin-Film Modulators!", "thin film modulators") is True
    assert matcher("electro optic bandwidth", "completely unrelated words") is False


# -- gold normalization ---------------------------------------------------------------


def test_normalize_gold_source_strips():
    assert normalize_gold_source("corpus/a/Smith2021.pdf") == "smith2021"
    assert normalize_gold_source("Smith2021") == "smith2021"
    assert normalize_gold_source("a/b/c.PDF") == "c"


# -- coverage / novelty ----------------------------------------------------------------


def test_coverage_novelty_identical():
    assert coverage_novelty({"a", "b"}, {"a", "b"}) == (0.0, 0.0)


def test_coverage_novelty_disjoint():
    assert coverage_novelty({"a"}, {"b"}) == (1.0, 1.0)


def test_coverage_novelty_hand_example():
    gap, novelty = coverage_novelty({"a", "b", "c"}, {"a", "d"})
    assert gap == pytest.approx(0.5)
    assert novelty == pytest.approx(2 / 3)


def test_coverage_novelty_guards():
    with pytest.raises(UndefinedMetric):
        coverage_novelty(set(), {"a"})
    with pytest.raises(UndefinedMetric):
        coverage_novelty({"a"}, set())


# -- efficiency --------------------------------------------------------------------------


def test_nearest_rank_hand_counts():
    values = [float(v) for v in range(1, 11)]
    assert nearest_rank(values, 50) == 5.0
    assert nearest_rank(values, 90) == 9.0
    assert nearest_rank(values, 100) == 10.0


def test_aggregate_singleton():
    config = RunConfig("s", "q1", CATEGORIES[0], "m", "m", "m", 4, "low", None, True, 0)
    from citegate.harness import RunRecord

    record = RunRecord(config, latency_s=2.5, cost_usd=0.01, token_in=10, token_out=5)
    out = aggregate_efficiency([record])
    assert out["latency_s"] == {"mean": 2.5, "p50": 2.5, "p90": 2.5}


def test_aggregate_excludes_failed_counts_separately():
    from citegate.harness import RunRecord

    config = RunConfig("s", "q1", CATEGORIES[0], "m", "m", "m", 4, "low", None, True, 0)
    ok = [RunRecord(config, latency_s=float(v)) for v in range(1, 11)]
    bad = [RunRecord(config, failed=True, latency_s=999.0)]
    out = aggregate_efficiency(ok + bad)
    assert out["failed"] == 1
    assert out["latency_s"]["p50"] == 5.0
    assert out["latency_s"]["p90"] == 9.0


def test_aggregate_empty_undefined():
    with pytest.raises(UndefinedMetric):
        aggregate_efficiency([])


# -- execution ----------------------------------------------------------------------------


def run_config(qid="q000") -> RunConfig:
    return RunConfig(
        "sys", qid, CATEGORIES[0], "gpt-4o-mini", "o4-mini", "o4-mini", 8, "medium", None, True, 0
    )


def test_execute_run_populates_record():
    engine, _, _ = scripted_engine(happy_scripts(), index=kb())
    record = execute_run(run_config(), questions(1)[0], engine)
    assert record.failed is False
    assert record.latency_s > 0
    assert record.token_in > 0 and record.token_out > 0
    assert record.cost_usd > 0
    assert record.confidence_score == 1.0
    assert record.confidence_flag is False
    assert record.citations_raw == ["doi:10.1/kb0#0"]


def test_execute_run_abstention_sets_flag():
    from test_engine import unsure_scripts

    engine, _, _ = scripted_engine(unsure_scripts("0.25"), index=kb())
    record = execute_run(run_config(), questions(1)[0], engine)
    assert record.confidence_flag is True
    assert record.confidence_score == 0.25


def test_execute_run_failure_yields_flagged_row():
    engine, _, _ = scripted_engine({"relevance": ["never valid"]}, index=kb())
    record = execute_run(run_config(), questions(1)[0], engine)
    assert record.failed is True


def test_sweep_csv_deterministic_and_ordered():
    factors = {"retrieval_k": [4, 8], "reasoning_level": ["low", "high"]}
    qs = questions(2)
    manifest = build_manifest(factors, qs, seed=5)

    def factory(config):
        engine, _, _ = scripted_engine(happy_scripts(), index=kb())
        return engine

    csv_a = write_csv(run_sweep(manifest, qs, factory))
    csv_b = write_csv(run_sweep(manifest, qs, factory))
    assert csv_a == csv_b
    assert len(csv_a.splitlines()) == 1 + len(manifest)
    csv_parallel = write_csv(run_sweep(manifest, qs, factory, workers=4))
    assert csv_parallel == csv_a
