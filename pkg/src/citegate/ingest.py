"""Corpus ingestion: scheduled crawl, snowball expansion, dedup gating,
parsing, two-stage metric extraction, transactional dual-store writes, and
failure routing (Missing-List, needs-manual-fix, upload re-entry).

Portal integrations are adapter interfaces; the synthetic corpus format
(a directory of structured JSON documents plus a `doi -> doi` citation
graph file) lets every tier run as a faithful stub.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

from citegate.canonical import CanonicalId, canonicalize, normalize_doi, urlhash
from citegate.errors import (
    ConfigError,
    CrawlFailure,
    DocumentParseFailure,
    NotFound,
    RejectedInput,
    SchemaExhausted,
    SchemaViolation,
)
from citegate.gateway import PromptGateway
from citegate.retrieval import Chunk, VectorIndex, chunk_document
from citegate.store import (
    DETERMINISTIC,
    METRIC_FIELDS,
    NUMERIC_METRICS,
    REASONING,
    MetricsRow,
    MetricsStore,
    parse_pub_date,
)

logger = logging.getLogger(__name__)

DEFAULT_PERIOD = timedelta(days=30)
SATURATION_FRACTION = 0.9
TIERS = (1, 2, 3, 4, 5)
EXCERPT_TOKENS = 4000


# -- keyword matrix -----------------------------------------------------------


@dataclass(frozen=True)
class KeywordTuple:
    platform: str
    device_class: str
    speed_marker: str
    window: tuple[int, int | None] = (2018, None)


def expand_matrix(axes: dict) -> list[KeywordTuple]:
    """Cartesian product of the three axes in a canonical (sorted) order."""
    try:
        platforms, devices, speeds = axes["platforms"], axes["devices"], axes["speeds"]
    except KeyError as exc:
        raise ConfigError(f"keyword axes missing {exc.args[0]!r}") from exc
    for name, values in (("platforms", platforms), ("devices", devices), ("speeds", speeds)):
        if not values:
            raise ConfigError(f"keyword axis {name!r} is empty")
    window = tuple(axes.get("window", (2018, None)))
    return [
        KeywordTuple(p, d, s, window)
        for p, d, s in itertools.product(sorted(platforms), sorted(devices), sorted(speeds))
    ]


def scheduler_tick(now: float, last_run: float, period: timedelta = DEFAULT_PERIOD) -> bool:
    """True when a full period has elapsed since the last run."""
    return (now - last_run) >= period.total_seconds()


# -- document records ---------------------------------------------------------


class DocStatus(Enum):
    NEW = "new"
    ABSTRACT_ONLY = "abstract_only"
    PARSED = "parsed"
    NEEDS_MANUAL_FIX = "needs_manual_fix"
    INGESTED = "ingested"


STATUS_EDGES = frozenset(
    {
        (DocStatus.NEW, DocStatus.ABSTRACT_ONLY),
        (DocStatus.NEW, DocStatus.PARSED),
        (DocStatus.NEW, DocStatus.NEEDS_MANUAL_FIX),
        (DocStatus.ABSTRACT_ONLY, DocStatus.PARSED),
        (DocStatus.ABSTRACT_ONLY, DocStatus.NEEDS_MANUAL_FIX),
        (DocStatus.ABSTRACT_ONLY, DocStatus.INGESTED),
        (DocStatus.NEEDS_MANUAL_FIX, DocStatus.PARSED),
        (DocStatus.NEEDS_MANUAL_FIX, DocStatus.NEEDS_MANUAL_FIX),
        (DocStatus.PARSED, DocStatus.INGESTED),
    }
)


@dataclass
class DocumentRecord:
    canonical: CanonicalId
    title: str
    tier: int
    sha1_pdf: str | None = None
    status: DocStatus = DocStatus.NEW
    citations_out: list[CanonicalId] = field(default_factory=list)
    cited_by: list[CanonicalId] = field(default_factory=list)
    pub_date: date = date(2018, 1, 1)
    paywalled: bool = False
    abstract: str = ""
    payload: bytes | None = None
    status_history: list[DocStatus] = field(default_factory=lambda: [DocStatus.NEW])

    def set_status(self, new: DocStatus) -> None:
        if (self.status, new) not in STATUS_EDGES:
            raise RejectedInput(f"illegal status move {self.status.value} -> {new.value}")
        self.status = new
        self.status_history.append(new)


@dataclass(frozen=True)
class DedupKey:
    sha1_pdf: str | None
    doi: str | None

    def __post_init__(self):
        if not self.sha1_pdf and not self.doi:
            raise RejectedInput("dedup key needs sha1 or doi")


class DedupStore:
    """Linearizable check-and-insert over content hash and identity.

    One entry per admitted document: {sha1?, doi?}.  A candidate matching
    EITHER component of any stored entry is a duplicate.  The identity
    component is the canonical id string (a DOI for papers; ids without a
    DOI fall back to their urlhash identity).
    """

    def __init__(self):
        self._entries: list[tuple[str | None, str | None]] = []
        self._sha1s: set[str] = set()
        self._ids: set[str] = set()
        self._lock = threading.Lock()

    def check_and_insert(self, key: DedupKey) -> bool:
        """True when the key was new (now recorded); False for duplicates."""
        with self._lock:
            dup = (key.sha1_pdf in self._sha1s if key.sha1_pdf else False) or (
                key.doi in self._ids if key.doi else False
            )
            if dup:
                return False
            self._entries.append((key.sha1_pdf, key.doi))
            if key.sha1_pdf:
                self._sha1s.add(key.sha1_pdf)
            if key.doi:
                self._ids.add(key.doi)
            return True

    def __contains__(self, identity: str) -> bool:
        return identity in self._ids or identity in self._sha1s

    def __len__(self) -> int:
        return len(self._entries)

    def export_text(self) -> str:
        records = []
        for sha1, ident in sorted(self._entries, key=lambda e: (e[1] or "", e[0] or "")):
            record = {}
            if sha1:
                record["sha1"] = sha1
            if ident:
                record["doi"] = ident
            records.append(json.dumps(record, sort_keys=True))
        return "\n".join(records) + ("\n" if records else "")


def dedup_gate(candidate: DocumentRecord, store: DedupStore) -> str:
    """'accept' or 'duplicate'; accepting records both key components."""
    key = DedupKey(candidate.sha1_pdf, str(candidate.canonical))
    return "accept" if store.check_and_insert(key) else "duplicate"


class MissingList:
    """Curator queue of paywalled and parse-failed documents, keyed by id."""

    def __init__(self):
        self._entries: dict[str, dict] = {}

    def add(self, canonical: CanonicalId, title: str, tier: int, first_seen: str) -> bool:
        key = str(canonical)
        if key in self._entries:
            return False
        self._entries[key] = {
            "canonical": key,
            "title": title,
            "tier": tier,
            "first_seen": first_seen,
        }
        return True

    def remove(self, canonical: CanonicalId) -> bool:
        return self._entries.pop(str(canonical), None) is not None

    def __contains__(self, canonical) -> bool:
        return str(canonical) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[dict]:
        return [dict(v) for _, v in sorted(self._entries.items())]

    def export_text(self) -> str:
        lines = [json.dumps(e, sort_keys=True) for e in self.entries()]
        return "\n".join(lines) + ("\n" if lines else "")


# -- crawling and snowballing -------------------------------------------------


class SourceAdapter:
    """One literature portal tier; synthetic tiers read the test corpus."""

    tier: int = 0

    def search(self, keywords: KeywordTuple) -> list[DocumentRecord]:
        raise NotImplementedError


def crawl_tiers(keywords: KeywordTuple, adapters: list[SourceAdapter]) -> list[DocumentRecord]:
    """Query tiers in order; a failing tier is skipped with a warning."""
    candidates: list[DocumentRecord] = []
    failures = 0
    for adapter in sorted(adapters, key=lambda a: a.tier):
        try:
            found = adapter.search(keywords)
        except Exception as exc:  # adapter fault: degrade, keep crawling
            failures += 1
            logger.warning("tier %d adapter failed for %s: %s", adapter.tier, keywords, exc)
            continue
        for record in found:
            record.tier = adapter.tier
            candidates.append(record)
    if adapters and failures == len(adapters):
        raise CrawlFailure(f"every tier failed for {keywords}")
    return candidates


def canonical_token(token: str) -> str:
    """Normalize a citation-graph or reference token to a canonical id string."""
    token = token.strip()
    if token.startswith(("doi:", "isbn:", "urlhash:")):
        return str(CanonicalId.parse(token))
    if "://" in token:
        return f"urlhash:{urlhash(token)}"
    return f"doi:{normalize_doi(token)}"


class CitationGraph:
    """Backward (cites) and forward (cited-by) lookups over canonical ids."""

    def __init__(self):
        self._out: dict[str, list[str]] = {}
        self._in: dict[str, list[str]] = {}

    def add_edge(self, src: str, dst: str) -> None:
        self._out.setdefault(src, []).append(dst)
        self._in.setdefault(dst, []).append(src)

    def outgoing(self, canonical: str) -> list[str]:
        return list(self._out.get(canonical, []))

    def incoming(self, canonical: str) -> list[str]:
        return list(self._in.get(canonical, []))

    @classmethod
    def from_file(cls, path: str | Path) -> "CitationGraph":
        graph = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            src, arrow, dst = line.partition("->")
            if not arrow:
                raise RejectedInput(f"bad citation graph line: {line!r}")
            graph.add_edge(canonical_token(src), canonical_token(dst))
        return graph


def snowball(
    seeds: list[DocumentRecord],
    graph: CitationGraph,
    seen: set,
    resolve,
    saturation: float = SATURATION_FRACTION,
) -> list[DocumentRecord]:
    """Breadth-first citation expansion until the frontier saturates.

    Per wave, the fraction of newly encountered ids already in ``seen`` is
    measured before the wave's unseen documents are admitted; expansion
    stops once that fraction exceeds ``saturation`` or nothing new turns
    up.  A visited set guarantees termination on cyclic graphs.
    """
    result: list[DocumentRecord] = []
    visited = {str(doc.canonical) for doc in seeds}
    frontier = [str(doc.canonical) for doc in seeds]
    while frontier:
        encountered: list[str] = []
        for node in frontier:
            for neighbor in graph.outgoing(node) + graph.incoming(node):
                if neighbor not in visited:
                    visited.add(neighbor)
                    encountered.append(neighbor)
        if not encountered:
            break
        known = sum(1 for ident in encountered if ident in seen)
        fraction = known / len(encountered)
        next_frontier = []
        for ident in encountered:
            if ident in seen:
                continue
            record = resolve(ident)
            if record is not None:
                result.append(record)
            next_frontier.append(ident)
        if fraction > saturation:
            break
        frontier = next_frontier
    return result


# -- parsing and extraction ---------------------------------------------------


@dataclass(frozen=True)
class Section:
    heading: str
    paragraphs: tuple[str, ...]


@dataclass(frozen=True)
class StructuredDocument:
    title: str
    sections: tuple[Section, ...]
    references: tuple[str, ...]

    @property
    def full_text(self) -> str:
        return "\n\n".join(
            "\n".join((s.heading, *s.paragraphs)).strip() for s in self.sections
        )


class ParserAdapter:
    """Structured-text parser boundary (external service or test adapter)."""

    def parse(self, data: bytes) -> StructuredDocument:
        raise NotImplementedError


class JsonDocParser(ParserAdapter):
    """Parses the synthetic corpus document format (JSON bytes)."""

    def parse(self, data: bytes) -> StructuredDocument:
        try:
            doc = json.loads(data.decode("utf-8"))
            sections = tuple(
                Section(s.get("heading", ""), tuple(s["text"].splitlines()) or (s["text"],))
                for s in doc["sections"]
            )
            return StructuredDocument(doc["title"], sections, tuple(doc.get("references", [])))
        except Exception as exc:
            raise DocumentParseFailure(f"unparseable document: {exc}") from exc


def parse_document(pdf_bytes: bytes, parser: ParserAdapter) -> StructuredDocument:
    if not pdf_bytes:
        raise RejectedInput("empty document bytes")
    return parser.parse(pdf_bytes)


@dataclass
class ExtractedMetrics:
    doi: CanonicalId
    pub_date: date
    values: dict = field(default_factory=dict)  # field -> value
    provenance: dict = field(default_factory=dict)  # field -> deterministic|reasoning

    def to_row(self) -> MetricsRow:
        row = MetricsRow(self.doi, self.pub_date, provenance=dict(self.provenance))
        for name, value in self.values.items():
            setattr(row, name, value)
        return row


# Rule table for the deterministic pass: (field, pattern, unit -> factor).
# Units are normalized to GHz, V*cm, dB, and fJ/bit respectively.
EXTRACTION_RULES: list[tuple[str, re.Pattern, dict[str, float]]] = [
    (
        "bandwidth_3db_ghz",
        re.compile(
            r"3\s*[- ]?\s*dB\s+bandwidths?[^.\d]{0,40}?(\d+(?:\.\d+)?)\s*(GHz|THz)",
            re.IGNORECASE,
        ),
        {"ghz": 1.0, "thz": 1000.0},
    ),
    (
        "vpi_l_v_cm",
        re.compile(
            r"V\s*_?\s*(?:π|pi)\s*[·.x*]?\s*L[^.\d]{0,40}?(\d+(?:\.\d+)?)"
            r"\s*(V\s*[·.]?\s*cm|V\s*[·.]?\s*mm)",
            re.IGNORECASE,
        ),
        {"v cm": 1.0, "v mm": 0.1},
    ),
    (
        "insertion_loss_db",
        re.compile(
            r"insertion\s+loss(?:es)?[^.\d]{0,40}?(\d+(?:\.\d+)?)\s*(dB)",
            re.IGNORECASE,
        ),
        {"db": 1.0},
    ),
    (
        "energy_per_bit_fj",
        re.compile(
            r"(\d+(?:\.\d+)?)\s*(fJ|pJ)\s*(?:/|\s*per\s*)\s*bit",
            re.IGNORECASE,
        ),
        {"fj": 1.0, "pj": 1000.0},
    ),
]


def _normalize_unit(raw: str) -> str:
    return " ".join(re.sub(r"[·.*x_]", " ", raw.casefold()).split())


def extract_deterministic(
    doc: StructuredDocument, doi: CanonicalId, pub_date: date
) -> ExtractedMetrics:
    """Apply the explicit-statement rule table; absent fields stay absent."""
    text = doc.full_text
    metrics = ExtractedMetrics(doi, pub_date)
    for name, pattern, factors in EXTRACTION_RULES:
        match = pattern.search(text)
        if not match:
            continue
        value = float(match.group(1))
        factor = factors[_normalize_unit(match.group(2))]
        metrics.values[name] = value * factor
        metrics.provenance[name] = DETERMINISTIC
    return metrics


def reasoning_excerpt(doc: StructuredDocument, max_tokens: int = EXCERPT_TOKENS) -> str:
    """First ``max_tokens`` whitespace tokens of the concatenated sections."""
    tokens = doc.full_text.split()
    return " ".join(tokens[:max_tokens])


def _parse_metrics_reply(reply: str) -> dict:
    try:
        data = json.loads(reply)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"metrics reply is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("metrics reply must be a JSON object")
    unknown = set(data.keys()) - set(METRIC_FIELDS)
    if unknown:
        raise SchemaViolation(f"metrics reply has unknown fields: {sorted(unknown)}")
    return data


def extract_reasoning(
    excerpt: str, current: ExtractedMetrics, gateway: PromptGateway
) -> ExtractedMetrics:
    """Second-stage fill of fields the deterministic pass left absent.

    Deterministic fields are never overwritten; per-field type violations
    drop the field rather than failing the document.
    """
    schema = json.dumps({name: "number" for name in NUMERIC_METRICS} | {"packaging": "text"})
    prompt = gateway.render("metrics_reasoning", {"schema": schema, "excerpt": excerpt})
    try:
        data, _ = gateway.complete_with_retry("metrics_reasoning", prompt, _parse_metrics_reply)
    except (SchemaExhausted, ConfigError) as exc:
        logger.warning("reasoning extraction unavailable for %s: %s", current.doi, exc)
        return current
    for name, value in data.items():
        if name in current.values:
            continue  # deterministic precedence
        if name in NUMERIC_METRICS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                logger.warning("dropping non-numeric %s=%r for %s", name, value, current.doi)
                continue
            value = float(value)
        elif not isinstance(value, str):
            logger.warning("dropping non-text %s=%r for %s", name, value, current.doi)
            continue
        current.values[name] = value
        current.provenance[name] = REASONING
    return current


# -- dual-store write ---------------------------------------------------------


def dual_write(
    chunks: list[Chunk],
    metrics: ExtractedMetrics | None,
    index: VectorIndex,
    metrics_store: MetricsStore,
) -> bool:
    """Vector write and metrics upsert commit together or not at all."""
    index_snapshot = index.export_text()
    metrics_snapshot = metrics_store.snapshot()
    try:
        index.add(chunks)
        if metrics is not None:
            metrics_store.upsert(metrics.to_row())
        return True
    except Exception as exc:
        index.import_text(index_snapshot)
        metrics_store.restore(metrics_snapshot)
        logger.warning("dual write rolled back: %s", exc)
        return False


# -- synthetic corpus ---------------------------------------------------------


class SyntheticCorpus:
    """Directory of structured JSON documents plus a citation graph file."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._by_id: dict[str, Path] = {}
        self._records: dict[str, DocumentRecord] = {}
        for path in sorted(self.root.glob("*.json")):
            record = self._load_record(path)
            self._by_id[str(record.canonical)] = path
            self._records[str(record.canonical)] = record
        graph_path = self.root / "citations.graph"
        self.graph = CitationGraph.from_file(graph_path) if graph_path.exists() else CitationGraph()

    @staticmethod
    def _load_record(path: Path) -> DocumentRecord:
        raw = path.read_bytes()
        doc = json.loads(raw.decode("utf-8"))
        canonical = canonicalize(
            {k: doc.get(k) for k in ("doi", "isbn", "url") if doc.get(k)}
        )
        return DocumentRecord(
            canonical=canonical,
            title=doc["title"],
            tier=int(doc.get("tier", 4)),
            sha1_pdf=hashlib.sha1(raw).hexdigest(),
            pub_date=parse_pub_date(doc.get("pub_date", doc.get("year", 2018))),
            paywalled=bool(doc.get("paywalled", False)),
            abstract=doc.get("abstract", ""),
            payload=raw,
        )

    def record(self, canonical: str) -> DocumentRecord | None:
        held = self._records.get(canonical)
        if held is None:
            return None
        # fresh copy so pipeline state never leaks back into the corpus
        return self._load_record(self._by_id[canonical])

    def keywords_of(self, canonical: str) -> dict:
        doc = json.loads(self._by_id[canonical].read_text(encoding="utf-8"))
        return doc.get("keywords", {})

    def all_ids(self) -> list[str]:
        return sorted(self._records)


class SyntheticTierAdapter(SourceAdapter):
    """Faithful stub of one portal tier over the synthetic corpus."""

    def __init__(self, tier: int, corpus: SyntheticCorpus, fail: bool = False):
        self.tier = tier
        self.corpus = corpus
        self.fail = fail

    def search(self, keywords: KeywordTuple) -> list[DocumentRecord]:
        if self.fail:
            raise CrawlFailure(f"tier {self.tier} unavailable")
        found = []
        for ident in self.corpus.all_ids():
            record = self.corpus.record(ident)
            if record.tier != self.tier:
                continue
            kw = self.corpus.keywords_of(ident)
            if (
                kw.get("platform") == keywords.platform
                and kw.get("device") == keywords.device_class
                and kw.get("speed") == keywords.speed_marker
                and record.pub_date.year >= keywords.window[0]
            ):
                found.append(record)
        return found


# -- the pipeline -------------------------------------------------------------


@dataclass
class IngestReport:
    crawled: int = 0
    accepted: int = 0
    duplicates: int = 0
    ingested: int = 0
    abstract_only: int = 0
    needs_manual_fix: int = 0
    snowballed: int = 0
    skipped: bool = False


class IngestionPipeline:
    """Single-flight pipeline run over a keyword matrix and source tiers."""

    def __init__(
        self,
        corpus: SyntheticCorpus,
        axes: dict,
        index: VectorIndex,
        metrics_store: MetricsStore,
        parser: ParserAdapter | None = None,
        gateway: PromptGateway | None = None,
        adapters: list[SourceAdapter] | None = None,
        now=None,
        period: timedelta = DEFAULT_PERIOD,
    ):
        self.corpus = corpus
        self.axes = axes
        self.index = index
        self.metrics_store = metrics_store
        self.parser = parser or JsonDocParser()
        self.gateway = gateway
        self.adapters = adapters or [SyntheticTierAdapter(t, corpus) for t in TIERS]
        self.dedup = DedupStore()
        self.missing = MissingList()
        self.records: dict[str, DocumentRecord] = {}
        self.period = period
        self.last_run: float = float("-inf")
        self._now = now or (lambda: 0.0)
        self._running = threading.Lock()

    def run(self, now: float | None = None, force: bool = False) -> IngestReport:
        now = self._now() if now is None else now
        report = IngestReport()
        if not force and not scheduler_tick(now, self.last_run, self.period):
            report.skipped = True
            return report
        if not self._running.acquire(blocking=False):
            report.skipped = True  # single-flight: a run is already active
            return report
        try:
            accepted_records: list[DocumentRecord] = []
            for keywords in expand_matrix(self.axes):
                for candidate in crawl_tiers(keywords, self.adapters):
                    report.crawled += 1
                    self._admit(candidate, report, accepted_records)
            snowballed = snowball(
                accepted_records,
                self.corpus.graph,
                self.dedup,
                self.corpus.record,
            )
            for record in snowballed:
                report.snowballed += 1
                report.crawled += 1
                self._admit(record, report, [])
            self.last_run = now
            return report
        finally:
            self._running.release()

    def _admit(
        self,
        candidate: DocumentRecord,
        report: IngestReport,
        accepted_sink: list[DocumentRecord],
    ) -> None:
        if dedup_gate(candidate, self.dedup) == "duplicate":
            report.duplicates += 1
            return
        report.accepted += 1
        accepted_sink.append(candidate)
        self.records[str(candidate.canonical)] = candidate
        if candidate.paywalled:
            self.handle_paywall(candidate, candidate.abstract)
            report.abstract_only += 1
            return
        if self._parse_and_ingest(candidate):
            report.ingested += 1
        elif candidate.status is DocStatus.NEEDS_MANUAL_FIX:
            report.needs_manual_fix += 1

    def handle_paywall(self, candidate: DocumentRecord, abstract: str) -> DocumentRecord:
        """Store the abstract, queue the document for curators."""
        candidate.set_status(DocStatus.ABSTRACT_ONLY)
        if abstract:
            self.index.add(chunk_document(candidate.canonical, abstract, {"title": candidate.title, "tier": candidate.tier}))
        self.missing.add(
            candidate.canonical, candidate.title, candidate.tier, _stamp(self._now())
        )
        return candidate

    def _parse_and_ingest(self, candidate: DocumentRecord) -> bool:
        try:
            doc = parse_document(candidate.payload or b"", self.parser)
        except (DocumentParseFailure, RejectedInput) as exc:
            logger.warning("parse failed for %s: %s", candidate.canonical, exc)
            candidate.set_status(DocStatus.NEEDS_MANUAL_FIX)
            self.missing.add(
                candidate.canonical, candidate.title, candidate.tier, _stamp(self._now())
            )
            return False
        candidate.set_status(DocStatus.PARSED)
        candidate.citations_out = [
            CanonicalId.parse(canonical_token(r)) for r in doc.references
        ]
        metrics = extract_deterministic(doc, candidate.canonical, candidate.pub_date)
        if self.gateway is not None:
            metrics = extract_reasoning(reasoning_excerpt(doc), metrics, self.gateway)
        chunks = chunk_document(
            candidate.canonical,
            doc.full_text,
            {"title": candidate.title, "tier": candidate.tier},
        )
        if dual_write(chunks, metrics, self.index, self.metrics_store):
            candidate.set_status(DocStatus.INGESTED)
            return True
        return False

    def requeue_upload(self, pdf_bytes: bytes, canonical: CanonicalId) -> DocumentRecord:
        """Re-enter an uploaded document right after the paywall decision."""
        record = self.records.get(str(canonical))
        known = canonical in self.missing or (
            record is not None
            and record.status in (DocStatus.NEEDS_MANUAL_FIX, DocStatus.ABSTRACT_ONLY)
        )
        if not known:
            raise NotFound(f"{canonical} is not awaiting upload")
        if record is None:
            record = DocumentRecord(canonical, str(canonical), tier=4)
            self.records[str(canonical)] = record
        record.payload = pdf_bytes
        record.sha1_pdf = hashlib.sha1(pdf_bytes).hexdigest()
        if self._parse_and_ingest(record):
            self.missing.remove(canonical)
        return record


def _stamp(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()
