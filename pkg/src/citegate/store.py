"""Persistence: the relational metrics table, session records, exports.

The metrics table lives in an embedded single-file (or in-memory) sqlite
database — the contract is keyed upsert plus scans for Pareto/trend
queries, nothing more.  Sessions are JSON documents under a root
directory, one file per session.
"""

from __future__ import annotations

import csv
import io
import json
import sqlite3
import threading
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from pathlib import Path

from citegate.canonical import CanonicalId
from citegate.errors import NotFound, RejectedInput, SchemaExhausted, SchemaViolation, StoreQueryError
from citegate.gateway import CompletionUsage, PromptGateway

NUMERIC_METRICS = (
    "bandwidth_3db_ghz",
    "vpi_l_v_cm",
    "insertion_loss_db",
    "energy_per_bit_fj",
)
TEXT_METRICS = ("packaging",)
METRIC_FIELDS = NUMERIC_METRICS + TEXT_METRICS

DETERMINISTIC = "deterministic"
REASONING = "reasoning"


def parse_pub_date(value) -> date:
    """Full date where known, else January 1 of the year."""
    if isinstance(value, date):
        return value
    if isinstance(value, int):
        return date(value, 1, 1)
    if isinstance(value, str):
        text = value.strip()
        try:
            if len(text) == 4:
                return date(int(text), 1, 1)
            return date.fromisoformat(text)
        except ValueError as exc:
            raise RejectedInput(f"malformed publication date: {value!r}") from exc
    raise RejectedInput(f"malformed publication date: {value!r}")


@dataclass
class MetricsRow:
    doi: CanonicalId
    pub_date: date
    bandwidth_3db_ghz: float | None = None
    vpi_l_v_cm: float | None = None
    insertion_loss_db: float | None = None
    energy_per_bit_fj: float | None = None
    packaging: str | None = None
    provenance: dict = field(default_factory=dict)
    updated_at: str = ""

    def metric(self, name: str):
        if name not in METRIC_FIELDS:
            raise StoreQueryError(f"unknown metric field: {name!r}")
        return getattr(self, name)


class MetricsStore:
    """Keyed upsert with provenance precedence, plus Pareto/trend scans.

    Single writer, multiple readers: one connection shared across threads,
    serialized by a lock (service handlers run on worker threads).
    """

    def __init__(self, path: str | Path | None = None, now=None):
        self._conn = sqlite3.connect(
            str(path) if path else ":memory:", check_same_thread=False
        )
        self._lock = threading.RLock()
        self._now = now or (lambda: datetime.now(timezone.utc).timestamp())
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS metrics ("
                "doi TEXT PRIMARY KEY, pub_date TEXT, "
                + ", ".join(f"{f} REAL" for f in NUMERIC_METRICS)
                + ", packaging TEXT, provenance TEXT, updated_at TEXT)"
            )
            self._conn.commit()

    def close(self):
        with self._lock:
            self._conn.close()

    def __len__(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM metrics").fetchone()[0]

    def get(self, doi: CanonicalId) -> MetricsRow | None:
        with self._lock:
            cur = self._conn.execute(
                "SELECT doi, pub_date, "
                + ", ".join(METRIC_FIELDS)
                + ", provenance, updated_at FROM metrics WHERE doi = ?",
                (str(doi),),
            )
            row = cur.fetchone()
        return self._hydrate(row) if row else None

    @staticmethod
    def _hydrate(row) -> MetricsRow:
        values = dict(zip(("doi", "pub_date") + METRIC_FIELDS + ("provenance", "updated_at"), row))
        return MetricsRow(
            CanonicalId.parse(values["doi"]),
            date.fromisoformat(values["pub_date"]),
            values["bandwidth_3db_ghz"],
            values["vpi_l_v_cm"],
            values["insertion_loss_db"],
            values["energy_per_bit_fj"],
            values["packaging"],
            json.loads(values["provenance"]),
            values["updated_at"],
        )

    def upsert(self, row: MetricsRow) -> MetricsRow:
        """Insert, or field-wise merge honoring extraction precedence."""
        pub = parse_pub_date(row.pub_date)
        existing = self.get(row.doi)
        if existing is None:
            merged = replace(row, pub_date=pub, provenance=dict(row.provenance))
        else:
            merged = existing
            merged.pub_date = pub
            for name in METRIC_FIELDS:
                incoming = getattr(row, name)
                if incoming is None:
                    continue
                held_prov = existing.provenance.get(name)
                new_prov = row.provenance.get(name, DETERMINISTIC)
                if held_prov == DETERMINISTIC and new_prov == REASONING:
                    continue  # deterministic fields are never overwritten by reasoning
                setattr(merged, name, incoming)
                merged.provenance[name] = new_prov
        merged.updated_at = _iso(self._now())
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO metrics (doi, pub_date, "
                + ", ".join(METRIC_FIELDS)
                + ", provenance, updated_at) VALUES (?,?,?,?,?,?,?,?,?)",
                (
                    str(merged.doi),
                    merged.pub_date.isoformat(),
                    merged.bandwidth_3db_ghz,
                    merged.vpi_l_v_cm,
                    merged.insertion_loss_db,
                    merged.energy_per_bit_fj,
                    merged.packaging,
                    json.dumps(merged.provenance, sort_keys=True),
                    merged.updated_at,
                ),
            )
            self._conn.commit()
        return merged

    def all_rows(self) -> list[MetricsRow]:
        with self._lock:
            cur = self._conn.execute(
                "SELECT doi, pub_date, "
                + ", ".join(METRIC_FIELDS)
                + ", provenance, updated_at FROM metrics ORDER BY doi"
            )
            rows = cur.fetchall()
        return [self._hydrate(r) for r in rows]

    def pareto_front(
        self, metric_x: str, metric_y: str, sense: tuple[str, str] = ("max", "max")
    ) -> list[MetricsRow]:
        """Non-dominated rows under the per-axis senses (sort-scan skyline)."""
        for name in (metric_x, metric_y):
            if name not in NUMERIC_METRICS:
                raise StoreQueryError(f"unknown numeric metric field: {name!r}")
        for s in sense:
            if s not in ("min", "max"):
                raise StoreQueryError(f"sense must be min or max, got {s!r}")
        rows = [
            r
            for r in self.all_rows()
            if r.metric(metric_x) is not None and r.metric(metric_y) is not None
        ]
        sx = 1.0 if sense[0] == "max" else -1.0
        sy = 1.0 if sense[1] == "max" else -1.0
        keyed = sorted(
            rows,
            key=lambda r: (-sx * r.metric(metric_x), -sy * r.metric(metric_y), str(r.doi)),
        )
        front = []
        best_y = None
        i = 0
        while i < len(keyed):
            # group rows sharing the same x; only the group's max y can survive
            j = i
            x = sx * keyed[i].metric(metric_x)
            while j < len(keyed) and sx * keyed[j].metric(metric_x) == x:
                j += 1
            group_best = sy * keyed[i].metric(metric_y)
            for row in keyed[i:j]:
                y = sy * row.metric(metric_y)
                if y == group_best and (best_y is None or y > best_y):
                    front.append(row)
            if best_y is None or group_best > best_y:
                best_y = group_best
            i = j
        return front

    def trend(self, metric: str, bucket: str = "year") -> list[tuple[int, float, int]]:
        """(year, mean value, count) per publication year, years with data only."""
        if metric not in NUMERIC_METRICS:
            raise StoreQueryError(f"unknown numeric metric field: {metric!r}")
        if bucket != "year":
            raise StoreQueryError(f"unsupported trend bucket: {bucket!r}")
        with self._lock:
            cur = self._conn.execute(
                f"SELECT CAST(substr(pub_date, 1, 4) AS INTEGER) AS y, AVG({metric}), COUNT({metric}) "
                f"FROM metrics WHERE {metric} IS NOT NULL GROUP BY y ORDER BY y"
            )
            out = cur.fetchall()
        return [(int(y), float(mean), int(count)) for y, mean, count in out]

    # -- export / snapshot ---------------------------------------------------

    EXPORT_COLUMNS = ("doi", "pub_date") + METRIC_FIELDS + ("provenance", "updated_at")

    def export_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.EXPORT_COLUMNS)
        for row in self.all_rows():
            writer.writerow(
                [
                    str(row.doi),
                    row.pub_date.isoformat(),
                    *(
                        "" if getattr(row, f) is None else getattr(row, f)
                        for f in METRIC_FIELDS
                    ),
                    json.dumps(row.provenance, sort_keys=True),
                    row.updated_at,
                ]
            )
        return buf.getvalue()

    def snapshot(self) -> str:
        return self.export_text()

    def restore(self, snapshot: str) -> None:
        with self._lock:
            self._restore_locked(snapshot)

    def _restore_locked(self, snapshot: str) -> None:
        self._conn.execute("DELETE FROM metrics")
        reader = csv.reader(io.StringIO(snapshot))
        header = next(reader, None)
        if header is None:
            self._conn.commit()
            return
        for values in reader:
            rec = dict(zip(self.EXPORT_COLUMNS, values))
            self._conn.execute(
                "INSERT INTO metrics (doi, pub_date, "
                + ", ".join(METRIC_FIELDS)
                + ", provenance, updated_at) VALUES (?,?,?,?,?,?,?,?,?)",
                (
                    rec["doi"],
                    rec["pub_date"],
                    *(
                        (float(rec[f]) if rec[f] else None)
                        for f in NUMERIC_METRICS
                    ),
                    rec["packaging"] or None,
                    rec["provenance"],
                    rec["updated_at"],
                ),
            )
        self._conn.commit()


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


# -- sessions ----------------------------------------------------------------


@dataclass(frozen=True)
class MessageEntry:
    role: str  # user | assistant | system
    content: str
    timestamp: str  # ISO-8601
    usage: CompletionUsage | None = None

    def __post_init__(self):
        if self.role not in ("user", "assistant", "system"):
            raise RejectedInput(f"bad message role: {self.role!r}")

    def to_json(self) -> dict:
        doc = {"role": self.role, "content": self.content, "timestamp": self.timestamp}
        if self.usage is not None:
            doc["usage"] = {
                "token_in": self.usage.token_in,
                "token_out": self.usage.token_out,
                "cost_usd": self.usage.cost_usd,
            }
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "MessageEntry":
        usage = doc.get("usage")
        return cls(
            doc["role"],
            doc["content"],
            doc["timestamp"],
            CompletionUsage(**usage) if usage else None,
        )


@dataclass
class SessionRecord:
    session_id: str
    title: str
    messages: list[MessageEntry]
    created_at: str

    def validate(self) -> None:
        stamps = [m.timestamp for m in self.messages]
        if any(a > b for a, b in zip(stamps, stamps[1:])):
            raise RejectedInput("message timestamps must be non-decreasing")


class SessionStore:
    """One JSON document per session under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.json"

    def persist(self, record: SessionRecord) -> None:
        record.validate()
        doc = {
            "session_id": record.session_id,
            "title": record.title,
            "created_at": record.created_at,
            "messages": [m.to_json() for m in record.messages],
        }
        tmp = self._path(record.session_id).with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1), encoding="utf-8")
        tmp.replace(self._path(record.session_id))  # atomic last-write-wins

    def load(self, session_id: str) -> SessionRecord:
        path = self._path(session_id)
        if not path.exists():
            raise NotFound(f"no session {session_id!r}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        return SessionRecord(
            doc["session_id"],
            doc["title"],
            [MessageEntry.from_json(m) for m in doc["messages"]],
            doc["created_at"],
        )

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


def parse_title(reply: str) -> str:
    words = reply.strip().split()
    if not 3 <= len(words) <= 6:
        raise SchemaViolation(f"title must be 3-6 words, got {len(words)}")
    return " ".join(words)


def title_session(
    first_exchange: str, gateway: PromptGateway, today: date | None = None
) -> str:
    """A 3-6 word session title; over-long last replies are truncated, and
    a hopeless gateway falls back to a dated placeholder."""
    if not first_exchange.strip():
        raise RejectedInput("empty exchange")
    prompt = gateway.render("title", {"first_exchange": first_exchange})
    try:
        title, _ = gateway.complete_with_retry("title", prompt, parse_title)
        return title
    except SchemaExhausted as exc:
        words = exc.last_reply.strip().split()
        if len(words) > 6:
            return " ".join(words[:6])
        stamp = (today or date.today()).isoformat()
        return f"Untitled Session {stamp}"
