#!/usr/bin/env python3
"""Record service responses into frontend/fixtures/ for snapshot tests.

Drives the primary engine through its service adapter with the scripted
backend, so the fixtures are real wire payloads, reproducible offline.

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from citegate.config import ServiceConfig, build_bindings
from citegate.engine import EngineConfig, ResearchEngine, SequentialIds, VirtualClock
from citegate.gateway import PromptGateway, RateTable, ScriptedProvider
from citegate.ingest import IngestionPipeline, SyntheticCorpus
from citegate.retrieval import Chunk, HashingEmbedder, VectorIndex
from citegate.canonical import CanonicalId
from citegate.service import App
from citegate.store import MetricsStore, SessionStore

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

UNSURE = (
    '{"confidence_score": 0.25, "confident": false, '
    '"reasoning": "Context is thin on specifics."}'
)
MEDIUM = (
    '{"confidence_score": 0.5, "confident": false, '
    '"reasoning": "Partial coverage; verification needed."}'
)
CONFIDENT = (
    '{"confidence_score": 1.0, "confident": true, '
    '"reasoning": "Context covers the mechanism directly."}'
)


def make_index() -> VectorIndex:
    index = VectorIndex(HashingEmbedder(dim=64))
    chunks = [
        ("10.1/kb0", "Traveling-Wave Electrode Design", "electro-optic modulator bandwidth measurements"),
        ("10.1/kb1", "Thin-Film Waveguide Losses", "insertion loss of thin film waveguides"),
        ("10.1/kb2", "Drive Voltage Scaling Study", "drive voltage length product comparisons"),
    ]
    index.add(
        [
            Chunk(CanonicalId("doi", doi), 0, text, (0, len(text)), {"title": title})
            for doi, title, text in chunks
        ]
    )
    return index


def make_app(scripts: dict, tmp: Path) -> App:
    provider = ScriptedProvider(scripts)
    gateway = PromptGateway(provider, build_bindings(ServiceConfig()), RateTable())
    engine = ResearchEngine(
        gateway,
        make_index(),
        EngineConfig(fast_draft=False),
        session_store=SessionStore(tmp / "sessions"),
        clock=VirtualClock(),
        id_factory=SequentialIds(),
    )
    return App(engine)


def record(name: str, payload: dict) -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"recorded {name}")


def main() -> None:
    import tempfile

    tmp = Path(tempfile.mkdtemp(prefix="fixture-rec-"))

    app = make_app(
        {
            "relevance": ["Relevant: Yes"],
            "confidence": [CONFIDENT],
            "answer": [
                "Electrode microwave loss sets the roll-off. [[cite: doi:10.1/kb0 # 0]] "
                "Velocity mismatch adds a second penalty. [[cite: doi:10.1/kb2 # 0]]"
            ],
            "title": ["Bandwidth Limit Walkthrough"],
        },
        tmp,
    )
    record("ask_confident.json", app.ask({"question": "What limits the 3-dB bandwidth?"}))

    app = make_app(
        {
            "relevance": ["Relevant: Yes"],
            "confidence": [MEDIUM],
            "decomposition": ['["electrode loss mechanisms", "velocity matching impact"]'],
            "self_eval": ["0.5"],
            "answer": ["Partial picture only. [[cite: doi:10.1/kb1 # 0]]"],
            "title": ["Partial Coverage Session"],
        },
        tmp,
    )
    record("ask_disclaimer.json", app.ask({"question": "How does cladding change loss?"}))

    app = make_app(
        {
            "relevance": ["Relevant: Yes"],
            "confidence": [UNSURE],
            "decomposition": ['["unknown territory a", "unknown territory b"]'],
            "self_eval": ["0.25"],
            "answer": ["Nothing grounded. [[cite: doi:10.1/kb0 # 0]]"],
            "title": ["Abstained Session Record"],
        },
        tmp,
    )
    record("ask_abstained.json", app.ask({"question": "Speculative question far afield?"}))

    app = make_app({"relevance": ["Relevant: No"], "title": ["Refused Session Entry"]}, tmp)
    record("ask_irrelevant.json", app.ask({"question": "what is a good pasta recipe?"}))

    # missing-list via a tiny paywalled corpus
    corpus_dir = tmp / "corpus"
    corpus_dir.mkdir()
    (corpus_dir / "doc0.json").write_text(
        json.dumps(
            {
                "doi": "10.2/paywalled",
                "title": "Unreachable Measurement Study",
                "tier": 1,
                "year": 2022,
                "keywords": {"platform": "p", "device": "d", "speed": "s"},
                "paywalled": True,
                "abstract": "Abstract text only.",
                "sections": [{"heading": "A", "text": "hidden"}],
                "references": [],
            }
        ),
        encoding="utf-8",
    )
    pipeline = IngestionPipeline(
        SyntheticCorpus(corpus_dir),
        {"platforms": ["p"], "devices": ["d"], "speeds": ["s"]},
        make_index(),
        MetricsStore(now=lambda: 0.0),
        now=lambda: 0.0,
    )
    pipeline.run(force=True)
    app = App(
        make_app({"relevance": ["Relevant: No"], "title": ["X Y Z"]}, tmp).engine,
        pipeline=pipeline,
    )
    record("missing_list.json", app.missing_list())
    record(
        "upload_result.json",
        app.upload(
            {
                "canonical": "doi:10.2/paywalled",
                "filename": "doc0.json",
                "bytes": base64.b64encode((corpus_dir / "doc0.json").read_bytes()).decode(),
            }
        ),
    )


if __name__ == "__main__":
    main()
