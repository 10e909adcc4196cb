"""Evaluation harness: factorial manifests, run execution, and metrics.

Calibration (ECE, AURC, isotonic recalibration), semantic citation
precision/recall, coverage-gap/novelty, and efficiency aggregates — all
deterministic and offline-friendly.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from citegate.errors import ConfigError, RejectedInput, UndefinedMetric

CATEGORIES = (
    "analytical_reasoning",
    "numerical_analysis",
    "methodological_critique",
    "comparative_synthesis",
    "anecdotal_response",
    "application_use_case",
)

CSV_COLUMNS = (
    "system_id",
    "question_id",
    "category",
    "relevance_model",
    "confidence_model",
    "knowledge_model",
    "retrieval_k",
    "reasoning_level",
    "temperature",
    "allow_online_search",
    "seed",
    "confidence_score",
    "confidence_flag",
    "answers",
    "citations_raw",
    "latency_s",
    "token_in",
    "token_out",
    "cost_usd",
    "failed",
)


@dataclass(frozen=True)
class Question:
    question_id: str
    category: str
    text: str
    gold_answer: str | None = None
    gold_sources: tuple[str, ...] = ()

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise RejectedInput(f"unknown question category: {self.category!r}")


def load_questions(path: str | Path) -> list[Question]:
    questions = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        doc = json.loads(line)
        questions.append(
            Question(
                doc["question_id"],
                doc["category"],
                doc["text"],
                doc.get("gold_answer"),
                tuple(doc.get("gold_sources", ())),
            )
        )
    return questions


@dataclass(frozen=True)
class RunConfig:
    system_id: str
    question_id: str
    category: str
    relevance_model: str
    confidence_model: str
    knowledge_model: str
    retrieval_k: int
    reasoning_level: str
    temperature: float | None
    allow_online_search: bool
    seed: int


FACTOR_NAMES = (
    "relevance_model",
    "confidence_model",
    "knowledge_model",
    "retrieval_k",
    "reasoning_level",
    "temperature",
    "allow_online_search",
)

DEFAULT_FACTORS = {
    "relevance_model": ["gpt-4o-mini"],
    "confidence_model": ["o4-mini"],
    "knowledge_model": ["o4-mini"],
    "retrieval_k": [4, 8, 12],
    "reasoning_level": ["low", "medium", "high"],
    "temperature": [None],
    "allow_online_search": [True],
}


def build_manifest(
    factors: dict, questions: list[Question], seed: int, system_id: str = "citegate"
) -> list[RunConfig]:
    """Full factor grid x questions; per-question order is a seeded shuffle."""
    levels = dict(DEFAULT_FACTORS)
    levels.update(factors or {})
    for name in FACTOR_NAMES:
        if not levels.get(name):
            raise ConfigError(f"factor {name!r} has no levels")
    grid = list(itertools.product(*(levels[name] for name in FACTOR_NAMES)))
    runs = []
    for question in questions:
        rng = random.Random(f"{seed}:{question.question_id}")
        for combo in rng.sample(grid, len(grid)):
            values = dict(zip(FACTOR_NAMES, combo))
            runs.append(
                RunConfig(
                    system_id=system_id,
                    question_id=question.question_id,
                    category=question.category,
                    seed=seed,
                    **values,
                )
            )
    return runs


@dataclass
class RunRecord:
    config: RunConfig
    answers: str = ""
    citations_raw: list[str] = field(default_factory=list)
    latency_s: float = 0.0
    token_in: int = 0
    token_out: int = 0
    confidence_flag: bool = False
    confidence_score: float = 0.0
    cost_usd: float = 0.0
    failed: bool = False

    def to_csv_row(self) -> list:
        c = self.config
        return [
            c.system_id,
            c.question_id,
            c.category,
            c.relevance_model,
            c.confidence_model,
            c.knowledge_model,
            c.retrieval_k,
            c.reasoning_level,
            "" if c.temperature is None else c.temperature,
            c.allow_online_search,
            c.seed,
            self.confidence_score,
            self.confidence_flag,
            self.answers,
            json.dumps(self.citations_raw),
            self.latency_s,
            self.token_in,
            self.token_out,
            self.cost_usd,
            self.failed,
        ]


def execute_run(config: RunConfig, question: Question, engine) -> RunRecord:
    """One engine run per config; failures become flagged rows, never gaps."""
    record = RunRecord(config)
    start = engine.clock.now()
    try:
        answer, ctx = engine.ask(question.text)
    except Exception:  # noqa: BLE001 - a row must always come back, never a gap
        record.failed = True
        record.latency_s = max(engine.clock.now() - start, 0.0)
        return record
    run = engine.last_run_state
    record.latency_s = max(engine.clock.now() - start, 0.0)
    record.token_in = run.usage.token_in
    record.token_out = run.usage.token_out
    record.cost_usd = run.usage.cost_usd
    if answer is None:
        record.answers = ctx.messages[-1].content if ctx.messages else ""
        record.confidence_score = 0.0
        record.confidence_flag = False
    else:
        record.answers = answer.answer_text
        record.citations_raw = [
            f"{item.chunk.doc_id}#{item.chunk.span_id}" for item in answer.citations
        ]
        record.confidence_score = answer.final_confidence
        record.confidence_flag = answer.abstained or answer.disclaimer is not None
    return record


def run_sweep(
    manifest: list[RunConfig],
    questions: list[Question],
    engine_factory,
    workers: int = 1,
) -> list[RunRecord]:
    """Execute every run; records come back in manifest order regardless of
    worker completion order."""
    by_id = {q.question_id: q for q in questions}

    def one(config: RunConfig) -> RunRecord:
        return execute_run(config, by_id[config.question_id], engine_factory(config))

    if workers <= 1:
        return [one(config) for config in manifest]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, manifest))


def write_csv(records: list[RunRecord], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow(record.to_csv_row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- calibration ---------------------------------------------------------------


def compute_ece(records: list[tuple[float, bool]], bins: int = 10) -> float:
    """Equal-width-bin expected calibration error."""
    if not records:
        raise UndefinedMetric("ECE of an empty set")
    if any(not 0.0 <= conf <= 1.0 for conf, _ in records):
        raise RejectedInput("confidences must lie in [0, 1]")
    total = len(records)
    ece = 0.0
    for b in range(bins):
        lo = b / bins
        hi = (b + 1) / bins
        if b == bins - 1:
            members = [(c, ok) for c, ok in records if lo <= c <= hi]
        else:
            members = [(c, ok) for c, ok in records if lo <= c < hi]
        if not members:
            continue
        mean_conf = sum(c for c, _ in members) / len(members)
        accuracy = sum(1 for _, ok in members if ok) / len(members)
        ece += (len(members) / total) * abs(mean_conf - accuracy)
    return ece


def risk_coverage_points(records: list[tuple[float, bool]]) -> list[tuple[float, float]]:
    """(coverage, risk) per prefix of the confidence-descending ordering."""
    if not records:
        raise UndefinedMetric("risk-coverage of an empty set")
    ordered = sorted(
        enumerate(records), key=lambda pair: (-pair[1][0], pair[0])
    )  # ties: stable input order
    total = len(records)
    points = []
    errors = 0
    for i, (_, (_, ok)) in enumerate(ordered, start=1):
        if not ok:
            errors += 1
        points.append((i / total, errors / i))
    return points


def compute_aurc(records: list[tuple[float, bool]]) -> float:
    """Trapezoid area under the risk-coverage curve (lower is better)."""
    points = risk_coverage_points(records)
    area = 0.0
    for (c0, r0), (c1, r1) in zip(points, points[1:]):
        area += (c1 - c0) * (r0 + r1) / 2.0
    return area


@dataclass(frozen=True)
class IsotonicMapping:
    """Non-decreasing step mapping fitted by pool-adjacent-violators."""

    thresholds: tuple[float, ...]  # block lower edges, ascending
    values: tuple[float, ...]

    def apply(self, confidence: float) -> float:
        value = self.values[0]
        for threshold, v in zip(self.thresholds, self.values):
            if confidence >= threshold:
                value = v
            else:
                break
        return value

    def __call__(self, confidence: float) -> float:
        return self.apply(confidence)


def isotonic_calibrate(records: list[tuple[float, bool]]) -> IsotonicMapping:
    """PAVA fit of correctness against confidence."""
    if len(records) < 2:
        raise UndefinedMetric("isotonic fit needs at least 2 records")
    grouped: dict[float, list[int]] = {}
    for conf, ok in records:
        grouped.setdefault(conf, []).append(1 if ok else 0)
    xs = sorted(grouped)
    if len(xs) == 1:
        overall = sum(grouped[xs[0]]) / len(grouped[xs[0]])
        return IsotonicMapping((xs[0],), (overall,))
    # blocks: [x_lo, weight, value]
    blocks: list[list[float]] = []
    for x in xs:
        labels = grouped[x]
        blocks.append([x, float(len(labels)), sum(labels) / len(labels)])
        while len(blocks) >= 2 and blocks[-2][2] > blocks[-1][2]:
            x_lo, w1, v1 = blocks[-2]
            _, w2, v2 = blocks[-1]
            blocks[-2:] = [[x_lo, w1 + w2, (w1 * v1 + w2 * v2) / (w1 + w2)]]
    return IsotonicMapping(
        tuple(b[0] for b in blocks), tuple(b[2] for b in blocks)
    )


# -- citation alignment ----------------------------------------------------------


def normalize_gold_source(path_or_name: str) -> str:
    """Basename without directories or a .pdf extension, case-folded."""
    if not path_or_name:
        raise RejectedInput("empty source name")
    base = re.split(r"[/\\]", path_or_name)[-1]
    if base.lower().endswith(".pdf"):
        base = base[: -len(".pdf")]
    return base.casefold()


def citation_prf(predicted: list, gold: list, matcher=None) -> tuple[float, float, float, int]:
    """Precision/recall/F1 via maximum bipartite matching under ``matcher``.

    Vacuous conventions: empty predictions give P=1, empty gold gives R=1.
    """
    matcher = matcher or (lambda a, b: a == b)
    edges = [
        [j for j, g in enumerate(gold) if matcher(p, g)] for p in predicted
    ]
    match_of_gold: dict[int, int] = {}

    def augment(i: int, banned: set[int]) -> bool:
        for j in edges[i]:
            if j in banned:
                continue
            banned.add(j)
            if j not in match_of_gold or augment(match_of_gold[j], banned):
                match_of_gold[j] = i
                return True
        return False

    for i in range(len(predicted)):
        augment(i, set())
    matched = len(match_of_gold)
    precision = matched / len(predicted) if predicted else 1.0
    recall = matched / len(gold) if gold else 1.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    return precision, recall, f1, matched


def make_semantic_matcher(embedder, threshold: float = 0.8):
    """Normalized-title equality OR title-embedding cosine >= threshold."""
    from citegate.citations import normalize_title
    from citegate.retrieval import cosine

    def matcher(a: str, b: str) -> bool:
        na, nb = normalize_title(a), normalize_title(b)
        if na == nb:
            return True
        if not na or not nb:
            return False
        return cosine(embedder.embed(na), embedder.embed(nb)) >= threshold

    return matcher


def coverage_novelty(system_items: set, baseline_items: set) -> tuple[float, float]:
    """(coverage_gap, novelty_rate) = (1 - recall, 1 - precision)."""
    if not baseline_items:
        raise UndefinedMetric("coverage gap needs a non-empty baseline")
    if not system_items:
        raise UndefinedMetric("novelty rate needs a non-empty system set")
    overlap = len(set(system_items) & set(baseline_items))
    return 1.0 - overlap / len(baseline_items), 1.0 - overlap / len(system_items)


# -- efficiency -------------------------------------------------------------------


def nearest_rank(values: list[float], percentile: float) -> float:
    """Nearest-rank percentile (1-based ceil rank) over the sorted values."""
    if not values:
        raise UndefinedMetric("percentile of an empty set")
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


def aggregate_efficiency(records: list[RunRecord]) -> dict:
    """mean/p50/p90 for latency, cost, and tokens; failed rows counted apart."""
    if not records:
        raise UndefinedMetric("no records to aggregate")
    ok = [r for r in records if not r.failed]
    out: dict = {"failed": len(records) - len(ok), "count": len(ok)}
    if not ok:
        return out
    for name in ("latency_s", "cost_usd", "token_in", "token_out"):
        values = [float(getattr(r, name)) for r in ok]
        out[name] = {
            "mean": sum(values) / len(values),
            "p50": nearest_rank(values, 50),
            "p90": nearest_rank(values, 90),
        }
    return out
