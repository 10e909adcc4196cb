"""Canonical source identities: doi, isbn, or a hash of the normalized URL."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from urllib.parse import urlsplit

from citegate.errors import UncitableSource

_DOI_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "doi:",
)

_DEFAULT_PORTS = {"http": "80", "https": "443"}


@dataclass(frozen=True, order=True)
class CanonicalId:
    """Normalized source identity; ordering is (kind, value) lexical."""

    kind: str  # "doi" | "isbn" | "urlhash"
    value: str

    def __str__(self) -> str:
        return f"{self.kind}:{self.value}"

    @classmethod
    def parse(cls, text: str) -> "CanonicalId":
        kind, sep, value = text.partition(":")
        if not sep or kind not in ("doi", "isbn", "urlhash") or not value:
            raise UncitableSource(f"not a canonical id: {text!r}")
        return cls(kind, value)


def normalize_doi(raw: str) -> str:
    doi = raw.strip()
    lowered = doi.lower()
    for prefix in _DOI_PREFIXES:
        if lowered.startswith(prefix):
            doi = doi[len(prefix):]
            lowered = doi.lower()
    return doi.strip().lower()


def normalize_isbn(raw: str) -> str:
    """Strip separators, keep digits + X, and prefer the 13-digit form."""
    isbn = re.sub(r"[^0-9Xx]", "", raw).upper()
    if len(isbn) == 10:
        return _isbn10_to_13(isbn)
    return isbn


def _isbn10_to_13(isbn10: str) -> str:
    body = "978" + isbn10[:9]
    total = sum((1 if i % 2 == 0 else 3) * int(d) for i, d in enumerate(body))
    check = (10 - total % 10) % 10
    return body + str(check)


def normalize_url(raw: str) -> str:
    parts = urlsplit(raw.strip())
    scheme = parts.scheme.lower()
    host = parts.hostname.lower() if parts.hostname else ""
    port = ""
    if parts.port is not None and str(parts.port) != _DEFAULT_PORTS.get(scheme):
        port = f":{parts.port}"
    path = parts.path
    if path.endswith("/") and path != "/":
        path = path.rstrip("/")
    normalized = f"{scheme}://{host}{port}{path}"
    if parts.query:
        normalized += f"?{parts.query}"
    return normalized


def urlhash(raw: str) -> str:
    return hashlib.sha1(normalize_url(raw).encode("utf-8")).hexdigest()


def canonicalize(source: dict) -> CanonicalId:
    """Resolve a raw reference to its canonical identity.

    Priority: doi > isbn > url hash.  A reference with none of the three
    identifying fields is uncitable.
    """
    if source.get("doi"):
        return CanonicalId("doi", normalize_doi(source["doi"]))
    if source.get("isbn"):
        return CanonicalId("isbn", normalize_isbn(source["isbn"]))
    if source.get("url"):
        return CanonicalId("urlhash", urlhash(source["url"]))
    raise UncitableSource(f"no identifying field in {sorted(source.keys())}")
