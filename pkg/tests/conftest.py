"""Shared fixtures: scripted engines, synthetic chunks, corpus builders."""

from __future__ import annotations

import json
import math
from array import array

import pytest

from citegate.canonical import CanonicalId
from citegate.config import ServiceConfig, build_bindings
from citegate.engine import (
    EngineConfig,
    ResearchEngine,
    SearchProvider,
    SearchUnavailable,
    SequentialIds,
    VirtualClock,
)
from citegate.gateway import PromptGateway, RateTable, ScriptedProvider
from citegate.retrieval import Chunk, EvidenceItem, HashingEmbedder, VectorIndex

TEST_DIM = 64

CONFIDENT_REPLY = (
    '{"confidence_score": 1.0, "confident": true, '
    '"reasoning": "Context covers the question directly."}'
)
UNSURE_REPLY = (
    '{"confidence_score": 0.25, "confident": false, '
    '"reasoning": "Context is tangential; core details are missing."}'
)


def make_chunk(doi: str = "10.1/kb0", span: int = 0, text: str | None = None, **meta) -> Chunk:
    body = text if text is not None else f"reference text for {doi} span {span}"
    meta.setdefault("title", f"Title of {doi}")
    return Chunk(CanonicalId("doi", doi), span, body, (0, len(body)), meta)


def make_evidence(chunk: Chunk, similarity: float = 0.9, iteration: int = 0) -> EvidenceItem:
    return EvidenceItem(chunk, similarity, iteration)


def unit_vector(dim: int, cos_with_e0: float) -> array:
    """A unit vector whose cosine with e0 is exactly the requested value."""
    vec = array("d", bytes(8 * dim))
    vec[0] = cos_with_e0
    vec[1] = math.sqrt(max(0.0, 1.0 - cos_with_e0 * cos_with_e0))
    return vec


@pytest.fixture
def embedder() -> HashingEmbedder:
    return HashingEmbedder(dim=TEST_DIM)


@pytest.fixture
def kb_index(embedder) -> VectorIndex:
    """Three-chunk index: with start_k=3 every chunk lands in evidence."""
    index = VectorIndex(embedder)
    index.add(
        [
            make_chunk("10.1/kb0", 0, "electro-optic modulator bandwidth measurements"),
            make_chunk("10.1/kb1", 0, "insertion loss of thin film waveguides"),
            make_chunk("10.1/kb2", 0, "drive voltage length product comparisons"),
        ]
    )
    return index


class QueueSearchProvider(SearchProvider):
    """Scripted search: each call pops the next batch of evidence items."""

    def __init__(self, batches):
        self.batches = [list(b) for b in batches]
        self.calls: list[tuple[str, int, int]] = []

    def search(self, query, k, iteration):
        self.calls.append((query, k, iteration))
        return self.batches.pop(0) if self.batches else []


class FailingSearchProvider(SearchProvider):
    def __init__(self):
        self.calls = 0

    def search(self, query, k, iteration):
        self.calls += 1
        raise SearchUnavailable("scripted outage")


def scripted_engine(
    scripts: dict,
    index: VectorIndex | None = None,
    config: EngineConfig | None = None,
    search: SearchProvider | None = None,
    session_store=None,
    repeat_last: bool = True,
):
    """Fully deterministic engine over a scripted provider."""
    if index is None:
        index = VectorIndex(HashingEmbedder(dim=TEST_DIM))
    provider = ScriptedProvider(scripts, repeat_last=repeat_last)
    gateway = PromptGateway(
        provider,
        build_bindings(ServiceConfig()),
        RateTable({"gpt-4o-mini": (0.00015, 0.0006), "o4-mini": (0.0011, 0.0044)}),
    )
    engine = ResearchEngine(
        gateway,
        index,
        config or EngineConfig(fast_draft=False),
        search=search,
        session_store=session_store,
        clock=VirtualClock(),
        id_factory=SequentialIds(),
    )
    return engine, provider, index


def happy_scripts(citation_key: str = "doi:10.1/kb0 # 0") -> dict:
    """Scripts for a confident, single-pass, well-cited run."""
    return {
        "relevance": ["Relevant: Yes"],
        "confidence": [CONFIDENT_REPLY],
        "answer": [f"The measured value is well documented. [[cite: {citation_key}]]"],
        "title": ["Bandwidth Evidence Session Notes"],
    }


# -- synthetic corpus builders --------------------------------------------------


def corpus_doc(
    doi: str,
    title: str,
    tier: int = 1,
    platform: str = "lithium niobate",
    device: str = "modulator",
    speed: str = "100 GBd",
    year: int = 2021,
    text: str = "Measured characteristics are reported in detail.",
    paywalled: bool = False,
    references: list[str] | None = None,
    abstract: str = "",
) -> dict:
    return {
        "doi": doi,
        "title": title,
        "tier": tier,
        "year": year,
        "keywords": {"platform": platform, "device": device, "speed": speed},
        "paywalled": paywalled,
        "abstract": abstract or f"Abstract of {title}.",
        "sections": [
            {"heading": "Introduction", "text": f"{title} introduction."},
            {"heading": "Results", "text": text},
        ],
        "references": references or [],
    }


def write_corpus(root, docs: list[dict], graph_lines: list[str] | None = None):
    root.mkdir(parents=True, exist_ok=True)
    for i, doc in enumerate(docs):
        (root / f"doc{i:03d}.json").write_text(json.dumps(doc, indent=1), encoding="utf-8")
    if graph_lines is not None:
        (root / "citations.graph").write_text("\n".join(graph_lines) + "\n", encoding="utf-8")
    return root
