"""Embedding, vector index, and dynamic-k retrieval.

The index is an exact cosine scan: scores come from the compiled kernel
(or its pure twin), selection and tie-breaking happen here so ordering
is fully specified.  An approximate backend can be dropped in behind the
same query surface if a corpus ever outgrows the exact scan.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import re
from array import array
from dataclasses import dataclass, field
from pathlib import Path

from citegate import kernel
from citegate.canonical import CanonicalId
from citegate.errors import EmbeddingFailure, IndexMismatch, RejectedInput

INDEX_FORMAT = "citegate-index/1"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Deterministic seeded feature-hashing embedder (test/offline provider).

    Word unigrams and bigrams are hashed into a fixed-dimension signed
    feature vector, then unit-normalized.  Same text, same seed, same
    vector — on any platform.
    """

    def __init__(self, dim: int = 256, seed: int = 13):
        self.dim = dim
        self._key = seed.to_bytes(8, "big", signed=True)

    def embed(self, text: str) -> array:
        if not text:
            raise RejectedInput("cannot embed empty text")
        tokens = _TOKEN_RE.findall(text.lower())
        features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        if not features:
            features = [text]
        vec = array("d", bytes(8 * self.dim))
        for feat in features:
            digest = hashlib.blake2b(
                feat.encode("utf-8"), key=self._key, digest_size=8
            ).digest()
            h = int.from_bytes(digest, "big")
            sign = 1.0 if h & 1 == 0 else -1.0
            vec[(h >> 1) % self.dim] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            raise EmbeddingFailure(f"degenerate feature vector for {text[:40]!r}")
        for i in range(self.dim):
            vec[i] /= norm
        return vec


def cosine(a, b) -> float:
    num = sum(x * y for x, y in zip(a, b))
    den = math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
    return num / den if den else 0.0


@dataclass(frozen=True)
class Chunk:
    """One retrievable span of a source document."""

    doc_id: CanonicalId
    span_id: int
    text: str
    char_offset: tuple[int, int]
    metadata: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, int]:
        return (str(self.doc_id), self.span_id)


@dataclass(frozen=True)
class EvidenceItem:
    """A retrieved chunk plus the similarity it scored at retrieval time."""

    chunk: Chunk
    similarity: float
    retrieved_at_iteration: int = 0

    @property
    def key(self) -> tuple[str, int]:
        return self.chunk.key


@dataclass
class RetrievalConfig:
    start_k: int = 3
    batch_increment: int = 3
    max_k: int = 12
    similarity_threshold: float = 0.75
    top_l: int = 12

    def __post_init__(self):
        if self.start_k > self.max_k:
            raise RejectedInput("start_k must not exceed max_k")
        if self.batch_increment < 1:
            raise RejectedInput("batch_increment must be >= 1")


def chunk_document(
    doc_id: CanonicalId,
    text: str,
    metadata: dict | None = None,
    size: int = 1000,
    overlap: int = 200,
) -> list[Chunk]:
    """Fixed-size character windows with overlap; span ids are sequential."""
    if size <= overlap:
        raise RejectedInput("chunk size must exceed overlap")
    chunks = []
    step = size - overlap
    start = 0
    span = 0
    while start < len(text):
        end = min(start + size, len(text))
        chunks.append(
            Chunk(doc_id, span, text[start:end], (start, end), dict(metadata or {}))
        )
        if end == len(text):
            break
        start += step
        span += 1
    return chunks


class VectorIndex:
    """Exact cosine index over unit vectors, upserted by (doc_id, span_id)."""

    def __init__(self, embedder: HashingEmbedder, name: str = "kb"):
        self.embedder = embedder
        self.name = name
        self._chunks: list[Chunk] = []
        self._vectors: array = array("d")
        self._row_of: dict[tuple[str, int], int] = {}

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def add(self, chunks: list[Chunk]) -> int:
        """Upsert chunks (embedding their text); returns count of new pairs."""
        new = 0
        for chunk in chunks:
            new += self.add_embedded(chunk, self.embedder.embed(chunk.text))
        return new

    def add_embedded(self, chunk: Chunk, vector) -> int:
        """Upsert one chunk with a precomputed vector; returns 1 if new."""
        if len(vector) != self.dim:
            raise IndexMismatch(f"vector dim {len(vector)} != index dim {self.dim}")
        row = self._row_of.get(chunk.key)
        if row is None:
            self._row_of[chunk.key] = len(self._chunks)
            self._chunks.append(chunk)
            self._vectors.extend(vector)
            return 1
        self._chunks[row] = chunk
        base = row * self.dim
        for j in range(self.dim):
            self._vectors[base + j] = vector[j]
        return 0

    def query_vector(self, qvec, k: int, iteration: int = 0) -> list[EvidenceItem]:
        if k < 1:
            raise RejectedInput("k must be >= 1")
        n = len(self._chunks)
        if n == 0:
            return []
        if len(qvec) != self.dim:
            raise IndexMismatch(f"query dim {len(qvec)} != index dim {self.dim}")
        scores = kernel.cosine_scores(self._vectors, array("d", qvec), n)
        # ties broken by (doc_id, span_id) lexical order
        top = heapq.nsmallest(
            min(k, n),
            range(n),
            key=lambda i: (-scores[i], self._chunks[i].key),
        )
        return [
            EvidenceItem(self._chunks[i], scores[i], iteration) for i in top
        ]

    def query_topk(self, query: str, k: int, iteration: int = 0) -> list[EvidenceItem]:
        return self.query_vector(self.embedder.embed(query), k, iteration)

    # -- persistence -------------------------------------------------------

    def export_text(self) -> str:
        header = {
            "format": INDEX_FORMAT,
            "dimension": self.dim,
            "count": len(self._chunks),
            "metric": "cosine",
        }
        lines = [json.dumps(header, separators=(",", ":"))]
        for row, chunk in enumerate(self._chunks):
            base = row * self.dim
            record = {
                "doc_id": str(chunk.doc_id),
                "span_id": chunk.span_id,
                "offsets": list(chunk.char_offset),
                "text": chunk.text,
                "metadata": chunk.metadata,
                "vector": list(self._vectors[base : base + self.dim]),
            }
            lines.append(json.dumps(record, separators=(",", ":"), sort_keys=True))
        return "\n".join(lines) + "\n"

    def import_text(self, text: str) -> None:
        lines = text.splitlines()
        if not lines:
            raise RejectedInput("empty index file")
        header = json.loads(lines[0])
        if header.get("format") != INDEX_FORMAT:
            raise RejectedInput(f"unknown index format: {header.get('format')!r}")
        if header["dimension"] != self.dim:
            raise IndexMismatch(
                f"file dim {header['dimension']} != index dim {self.dim}"
            )
        self._chunks = []
        self._vectors = array("d")
        self._row_of = {}
        for line in lines[1:]:
            rec = json.loads(line)
            chunk = Chunk(
                CanonicalId.parse(rec["doc_id"]),
                rec["span_id"],
                rec["text"],
                tuple(rec["offsets"]),
                rec["metadata"],
            )
            self.add_embedded(chunk, rec["vector"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.export_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, embedder: HashingEmbedder, name: str = "kb"):
        index = cls(embedder, name)
        index.import_text(Path(path).read_text(encoding="utf-8"))
        return index


def mean_similarity(evidence: list[EvidenceItem]) -> float:
    """Mean of an empty evidence set is defined as 0."""
    if not evidence:
        return 0.0
    return sum(item.similarity for item in evidence) / len(evidence)


def dynamic_k_retrieve(
    query: str,
    indexes: list[VectorIndex] | VectorIndex,
    cfg: RetrievalConfig | None = None,
    iteration: int = 0,
    ladder_sink: list | None = None,
) -> tuple[list[EvidenceItem], float]:
    """Escalating top-k retrieval until the mean similarity clears the bar.

    Runs the start/increment ladder per index, pools results, dedups by
    (doc_id, span_id) keeping the best score, truncates to top_l, and
    returns the final set with its mean similarity (computed after
    truncation).  ``ladder_sink``, when given, receives (index_name, k)
    for every attempt.
    """
    cfg = cfg or RetrievalConfig()
    if isinstance(indexes, VectorIndex):
        indexes = [indexes]
    pooled: dict[tuple[str, int], EvidenceItem] = {}
    for index in indexes:
        if len(index) == 0:
            continue
        qvec = index.embedder.embed(query)
        k = cfg.start_k
        while True:
            if ladder_sink is not None:
                ladder_sink.append((index.name, k))
            results = index.query_vector(qvec, k, iteration)
            if mean_similarity(results) >= cfg.similarity_threshold:
                break
            if k >= cfg.max_k:
                break
            k = min(k + cfg.batch_increment, cfg.max_k)
        for item in results:
            held = pooled.get(item.key)
            if held is None or item.similarity > held.similarity:
                pooled[item.key] = item
    final = sorted(pooled.values(), key=lambda e: (-e.similarity, e.key))[: cfg.top_l]
    return final, mean_similarity(final)
