"""Command-line surface: flags, exit codes, file outputs."""

from __future__ import annotations

import csv
import json

import pytest

from citegate.cli import main
from citegate.retrieval import HashingEmbedder, VectorIndex
from citegate.store import MetricsStore, MetricsRow
from citegate.canonical import CanonicalId

from conftest import TEST_DIM, corpus_doc, make_chunk, write_corpus

SCRIPTS = {
    "relevance": ["Relevant: Yes"],
    "confidence": [
        '{"confidence_score": 1.0, "confident": true, "reasoning": "Covered."}'
    ],
    "answer": ["Grounded result. [[cite: doi:10.1/kb0 # 0]]"],
    "title": ["Scripted Session Title Here"],
}


@pytest.fixture
def config_path(tmp_path):
    cfg = {
        "backend": "scripted",
        "scripts": SCRIPTS,
        "deterministic": True,
        "fast_draft": False,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


@pytest.fixture
def index_path(tmp_path):
    index = VectorIndex(HashingEmbedder(dim=256))
    index.add(
        [
            make_chunk("10.1/kb0", 0, "electro-optic modulator bandwidth measurements"),
            make_chunk("10.1/kb1", 0, "insertion loss of thin film waveguides"),
        ]
    )
    path = tmp_path / "index.txt"
    index.save(path)
    return str(path)


@pytest.fixture
def questions_path(tmp_path):
    lines = [
        json.dumps(
            {
                "question_id": f"q{i}",
                "category": "analytical_reasoning",
                "text": f"scripted question {i}",
            }
        )
        for i in range(2)
    ]
    path = tmp_path / "questions.jsonl"
    path.write_text("\n".join(lines), encoding="utf-8")
    return str(path)


def test_ask_writes_result(tmp_path, config_path, index_path, capsys):
    out = tmp_path / "answer.json"
    code = main(
        [
            "--config",
            config_path,
            "ask",
            "What limits 3-dB bandwidth?",
            "--index",
            index_path,
            "--out",
            str(out),
        ]
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["outcome"] == "answered"
    assert payload["citations"][0]["doc_id"] == "doi:10.1/kb0"


def test_sweep_row_count_and_flag_passthrough(tmp_path, config_path, questions_path, index_path):
    out = tmp_path / "results.csv"
    code = main(
        [
            "--config",
            config_path,
            "sweep",
            "--questions",
            questions_path,
            "--index",
            index_path,
            "--retrieval-k",
            "7",
            "--reasoning-level",
            "medium",
            "--seed",
            "3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2  # 1x1x1 factors x 2 questions
    assert {r["retrieval_k"] for r in rows} == {"7"}
    assert {r["failed"] for r in rows} == {"False"}


def test_sweep_deterministic_csv(tmp_path, config_path, questions_path, index_path):
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    args = [
        "--config",
        config_path,
        "sweep",
        "--questions",
        questions_path,
        "--index",
        index_path,
        "--retrieval-k",
        "4,8",
        "--seed",
        "9",
    ]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_calibrate_post_below_pre(tmp_path, capsys):
    rows = ["confidence_score,correct"]
    rows += ["1.0,1"] * 5 + ["1.0,0"] * 5  # overconfident block
    rows += ["0.75,1"] * 2 + ["0.75,0"] * 6
    infile = tmp_path / "judged.csv"
    infile.write_text("\n".join(rows), encoding="utf-8")
    out = tmp_path / "calibration.json"
    code = main(["calibrate", "--in", str(infile), "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["ece_post"] <= report["ece_pre"]
    assert report["ece_pre"] > 0.3


def test_calibrate_requires_correct_column(tmp_path):
    infile = tmp_path / "raw.csv"
    infile.write_text("confidence_score\n0.5\n", encoding="utf-8")
    assert main(["calibrate", "--in", str(infile)]) == 1


def test_report_efficiency_and_store_queries(tmp_path, config_path, questions_path, index_path):
    results = tmp_path / "results.csv"
    main(
        [
            "--config",
            config_path,
            "sweep",
            "--questions",
            questions_path,
            "--index",
            index_path,
            "--out",
            str(results),
        ]
    )
    metrics_path = tmp_path / "metrics.db"
    store = MetricsStore(metrics_path, now=lambda: 0.0)
    store.upsert(MetricsRow(CanonicalId("doi", "10.1/a"), "2020", bandwidth_3db_ghz=40.0, energy_per_bit_fj=100.0))
    store.upsert(MetricsRow(CanonicalId("doi", "10.1/b"), "2021", bandwidth_3db_ghz=60.0, energy_per_bit_fj=50.0))
    store.close()
    out = tmp_path / "report.json"
    code = main(
        [
            "report",
            "--in",
            str(results),
            "--metrics",
            str(metrics_path),
            "--pareto",
            "bandwidth_3db_ghz,energy_per_bit_fj",
            "--sense",
            "max,min",
            "--trend",
            "bandwidth_3db_ghz",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert "latency_s" in report["efficiency"]
    assert [p["doi"] for p in report["pareto"]] == ["doi:10.1/b"]
    assert report["trend"] == [
        {"year": 2020, "mean": 40.0, "count": 1},
        {"year": 2021, "mean": 60.0, "count": 1},
    ]


def test_ingest_command_exports(tmp_path, config_path):
    corpus_root = write_corpus(
        tmp_path / "corpus",
        [
            corpus_doc("10.1/a", "Doc A", text="A 3-dB bandwidth of 42 GHz was shown."),
            corpus_doc("10.1/pay", "Paywalled", paywalled=True),
        ],
        [],
    )
    out = tmp_path / "exports"
    code = main(
        ["--config", config_path, "ingest", "--corpus", str(corpus_root), "--out", str(out)]
    )
    assert code == 0
    assert (out / "index.txt").exists()
    assert "10.1/a" in (out / "metrics.csv").read_text()
    missing = (out / "missing_list.jsonl").read_text()
    assert "doi:10.1/pay" in missing


def test_usage_error_exit_code_two():
    with pytest.raises(SystemExit) as err:
        main(["sweep"])  # missing required flags
    assert err.value.code == 2


def test_unknown_command_exit_code_two():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
