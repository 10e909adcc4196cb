"""Closed-world citation enforcement.

Drafts cite evidence with bracketed markers; everything here is a pure
function from (draft, evidence) to aligned claim/evidence structure, a
rewritten answer whose references all live in the session evidence pool,
and fidelity rates over the result.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from citegate.canonical import CanonicalId, canonicalize  # noqa: F401  (module surface)
from citegate.errors import MarkerSyntaxError
from citegate.retrieval import EvidenceItem

MARKER_RE = re.compile(
    r"\[\[cite:\s*(doi|isbn|urlhash):([^#\]\s]+)\s*#\s*(\d+)\s*\]\]"
)
_MARKER_OPEN_RE = re.compile(r"\[\[cite")
_REF_TOKEN_RE = re.compile(r"\[\d+\]")

_ABBREVIATIONS = {
    "e.g", "i.e", "etc", "cf", "vs", "al", "fig", "figs", "eq", "eqs",
    "ref", "refs", "sec", "approx", "no", "dr", "mr", "ms", "prof", "st",
}


@dataclass(frozen=True)
class Marker:
    """One citation marker occurrence in a draft."""

    canonical: CanonicalId
    span_id: int
    start: int
    end: int

    @property
    def key(self) -> tuple[str, int]:
        return (str(self.canonical), self.span_id)

    @property
    def raw(self) -> str:
        return f"[[cite: {self.canonical} # {self.span_id}]]"


@dataclass(frozen=True)
class Claim:
    claim_id: int
    text: str
    sentence_span: tuple[int, int]


@dataclass
class ClaimEvidenceRow:
    claim_id: int
    supports: list[tuple[CanonicalId, int, tuple[int, int]]] = field(default_factory=list)


@dataclass(frozen=True)
class FidelityReport:
    fabricated_rate: float
    title_match_rate: float
    claim_coverage: float
    denominators: dict
    vacuous_claims: bool = False


@dataclass
class ClosedWorldResult:
    """Outcome of closed-world enforcement; ``passed`` False means abstain."""

    passed: bool
    answer_text: str | None
    citations: list[EvidenceItem]
    claims: list[Claim]
    rows: list[ClaimEvidenceRow]
    rejected: list[Marker]
    report: FidelityReport


def extract_markers(text: str) -> list[Marker]:
    """All well-formed markers, in order; any malformed opener is an error."""
    markers = []
    matched_spans = []
    for m in MARKER_RE.finditer(text):
        markers.append(
            Marker(
                CanonicalId(m.group(1), m.group(2)),
                int(m.group(3)),
                m.start(),
                m.end(),
            )
        )
        matched_spans.append((m.start(), m.end()))
    for opener in _MARKER_OPEN_RE.finditer(text):
        pos = opener.start()
        if not any(start <= pos < end for start, end in matched_spans):
            raise MarkerSyntaxError(pos, text[pos : pos + 40])
    return markers


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Sentence spans split on terminal punctuation with abbreviation guards.

    A bracketed reference token right after the terminator stays glued to
    its sentence, so trailing citations attach where a reader would put
    them.
    """
    spans = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?":
            # run of terminal punctuation (e.g. "?!", "...")
            j = i
            while j + 1 < n and text[j + 1] in ".!?":
                j += 1
            if _is_boundary(text, i, j):
                end = j + 1
                end = _glue_reference_tokens(text, end)
                spans.append((start, end))
                start = end
                while start < n and text[start].isspace():
                    start += 1
                i = start
                continue
        i += 1
    if start < n and text[start:].strip():
        spans.append((start, n))
    return spans


def _is_boundary(text: str, i: int, j: int) -> bool:
    if text[i] != ".":
        return True
    # decimal point
    if 0 < i < len(text) - 1 and text[i - 1].isdigit() and text[i + 1].isdigit():
        return False
    # abbreviation or single-letter initial before the dot
    k = i - 1
    while k >= 0 and (text[k].isalnum() or text[k] == "."):
        k -= 1
    word = text[k + 1 : i].lower().rstrip(".")
    if word in _ABBREVIATIONS:
        return False
    last = word.rsplit(".", 1)[-1]
    if last in _ABBREVIATIONS:
        return False
    if len(last) == 1 and last.isalpha() and text[i - 1].isupper():
        return False
    # require end-of-text or whitespace after the terminator run
    if j + 1 < len(text) and not text[j + 1].isspace():
        return False
    return True


def _glue_reference_tokens(text: str, end: int) -> int:
    while True:
        rest = text[end:]
        stripped = rest.lstrip(" ")
        pad = len(rest) - len(stripped)
        m = _REF_TOKEN_RE.match(stripped) or MARKER_RE.match(stripped)
        if m is None:
            return end
        end = end + pad + m.end()


def split_claims(text: str) -> list[Claim]:
    """Declarative sentences of the text, as non-overlapping claim spans."""
    claims = []
    claim_id = 1
    for start, end in split_sentences(text):
        body = text[start:end].rstrip()
        core = _REF_TOKEN_RE.sub("", MARKER_RE.sub("", body)).rstrip()
        if core.endswith("?"):
            continue
        claims.append(Claim(claim_id, body, (start, start + len(body))))
        claim_id += 1
    return claims


def _unique_in_order(markers: list[Marker]) -> list[Marker]:
    seen = set()
    out = []
    for marker in markers:
        if marker.key not in seen:
            seen.add(marker.key)
            out.append(marker)
    return out


def align_citations(
    draft: str, evidence: list[EvidenceItem]
) -> tuple[list[ClaimEvidenceRow], list[Marker]]:
    """Partition draft markers by evidence membership and build claim rows.

    Returns one row per declarative claim (supports may be empty) and the
    rejected markers — those whose (doc_id, span_id) is not in evidence —
    deduplicated in first-occurrence order.
    """
    markers = extract_markers(draft)
    evidence_keys = {item.key for item in evidence}
    accepted = [m for m in markers if m.key in evidence_keys]
    rejected = _unique_in_order([m for m in markers if m.key not in evidence_keys])

    final_text, placed = _rewrite(draft, accepted)
    claims = split_claims(final_text)
    rows = _attach(claims, placed, evidence)
    return rows, rejected


def _rewrite(
    draft: str, accepted: list[Marker]
) -> tuple[str, list[tuple[Marker, int]]]:
    """Replace accepted markers with [n] tokens, drop rejected ones.

    Returns the final text and each accepted marker's anchor offset in it.
    """
    order: list[tuple[str, int]] = []
    number: dict[tuple[str, int], int] = {}
    for marker in accepted:
        if marker.key not in number:
            order.append(marker.key)
            number[marker.key] = len(order)

    out = []
    placed = []
    cursor = 0
    for marker in sorted(extract_markers(draft), key=lambda m: m.start):
        out.append(draft[cursor : marker.start])
        if marker.key in number:
            anchor = sum(len(part) for part in out)
            out.append(f"[{number[marker.key]}]")
            placed.append((marker, anchor))
        else:
            # drop the marker plus any spaces immediately before it
            while out and out[-1].endswith(" "):
                out[-1] = out[-1][:-1]
        cursor = marker.end
    out.append(draft[cursor:])
    return "".join(out), placed


def _attach(
    claims: list[Claim],
    placed: list[tuple[Marker, int]],
    evidence: list[EvidenceItem],
) -> list[ClaimEvidenceRow]:
    chunk_of = {item.key: item.chunk for item in evidence}
    rows = [ClaimEvidenceRow(claim.claim_id) for claim in claims]
    for marker, anchor in placed:
        target = None
        for claim, row in zip(claims, rows):
            if claim.sentence_span[0] <= anchor:
                target = row
            else:
                break
        if target is None and rows:
            target = rows[0]
        if target is None:
            continue
        chunk = chunk_of[marker.key]
        support = (marker.canonical, marker.span_id, (0, len(chunk.text)))
        if support not in target.supports:
            target.supports.append(support)
    return rows


def normalize_title(title: str) -> str:
    return " ".join(re.sub(r"[^0-9a-z]+", " ", title.casefold()).split())


def compute_fidelity(
    rows: list[ClaimEvidenceRow],
    rejected: list[Marker],
    claims: list[Claim],
    evidence: list[EvidenceItem],
    rendered_titles: dict[tuple[str, int], str] | None = None,
) -> FidelityReport:
    """Fabrication, title-match, and coverage rates with their denominators."""
    aligned_keys = []
    seen = set()
    for row in rows:
        for doc_id, span_id, _ in row.supports:
            key = (str(doc_id), span_id)
            if key not in seen:
                seen.add(key)
                aligned_keys.append(key)

    cited = len(rejected) + len(aligned_keys)
    fabricated_rate = len(rejected) / cited if cited else 0.0

    meta_title = {
        item.key: normalize_title(item.chunk.metadata.get("title", ""))
        for item in evidence
    }
    rendered = rendered_titles or {}
    with_titles = [k for k in aligned_keys if k in rendered]
    if with_titles:
        matches = sum(
            1 for k in with_titles if normalize_title(rendered[k]) == meta_title.get(k)
        )
        title_match_rate = matches / len(with_titles)
    else:
        title_match_rate = 1.0

    vacuous = not claims
    if vacuous:
        claim_coverage = 1.0
    else:
        supported = sum(1 for row in rows if row.supports)
        claim_coverage = supported / len(claims)

    return FidelityReport(
        fabricated_rate,
        title_match_rate,
        claim_coverage,
        {
            "citations": cited,
            "titles": len(with_titles),
            "claims": len(claims),
        },
        vacuous_claims=vacuous,
    )


def enforce_closed_world(draft: str, evidence: list[EvidenceItem]) -> ClosedWorldResult:
    """Single pass of the closed-world policy.

    The output may cite only evidence-resident (doc_id, span_id) pairs; if
    no citation survives alignment the result is an abstain signal.  The
    one back-edge retry before abstention is the engine's job — this stays
    a pure function.
    """
    markers = extract_markers(draft)
    evidence_keys = {item.key for item in evidence}
    accepted = [m for m in markers if m.key in evidence_keys]
    rejected = _unique_in_order([m for m in markers if m.key not in evidence_keys])

    final_text, placed = _rewrite(draft, accepted)
    claims = split_claims(final_text)
    rows = _attach(claims, placed, evidence)

    by_key = {item.key: item for item in evidence}
    citations = []
    for marker in _unique_in_order(accepted):
        citations.append(by_key[marker.key])

    report = compute_fidelity(rows, rejected, claims, evidence)
    passed = bool(citations)
    return ClosedWorldResult(
        passed,
        final_text if passed else None,
        citations,
        claims,
        rows,
        rejected,
        report,
    )


def trim_citations(citations: list[EvidenceItem], limit: int = 3) -> list[EvidenceItem]:
    """Keep the top ``limit`` citations by similarity; ties break by key."""
    ranked = sorted(citations, key=lambda item: (-item.similarity, item.key))
    return ranked[:limit]


def export_claim_table(claims: list[Claim], rows: list[ClaimEvidenceRow]) -> str:
    """Stable, bit-exact claim→evidence table: one JSON record per claim."""
    text_of = {claim.claim_id: claim.text for claim in claims}
    lines = []
    for row in rows:
        record = {
            "claim_id": row.claim_id,
            "claim_text": text_of.get(row.claim_id, ""),
            "supports": [
                {
                    "doc_id": str(doc_id),
                    "span_id": span_id,
                    "offsets": list(offsets),
                }
                for doc_id, span_id, offsets in row.supports
            ],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")
