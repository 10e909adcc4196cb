"""Service endpoints over the engine, session store, and ingestion pipeline.

Thin adapters only: every payload field is computed by the underlying
modules; the boundary re-asserts the closed-world guarantee and nothing
else.  Plain JSON over a stdlib threading HTTP server.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from citegate.canonical import CanonicalId
from citegate.engine import ResearchEngine
from citegate.errors import NotFound, RejectedInput, UncitableSource
from citegate.fsm import export_trace
from citegate.ingest import DocStatus, IngestionPipeline
from citegate.store import SessionStore

logger = logging.getLogger(__name__)


class App:
    """Shared state behind the endpoints."""

    def __init__(
        self,
        engine: ResearchEngine,
        session_store: SessionStore | None = None,
        pipeline: IngestionPipeline | None = None,
    ):
        self.engine = engine
        self.session_store = session_store if session_store is not None else engine.session_store
        self.pipeline = pipeline
        self._ask_lock = threading.Lock()
        if self.session_store is not None:
            engine.session_store = self.session_store

    # -- handlers -------------------------------------------------------------

    def ask(self, body: dict) -> dict:
        question = body.get("question")
        if not isinstance(question, str) or not question.strip():
            raise RejectedInput("body must carry a non-empty 'question'")
        ingest = bool(body.get("ingest", False))
        session_id = body.get("session_id")
        if session_id is not None and not isinstance(session_id, str):
            raise RejectedInput("'session_id' must be a string when given")
        with self._ask_lock:  # sessions are single-owner; asks serialize
            record, ctx = self.engine.ask(question, ingest, session_id)
            run = self.engine.last_run_state
        payload = {
            "session_id": ctx.session_id,
            "abstained": False,
            "confidence": 0.0,
            "citations": [],
            "disclaimer": None,
            "outcome": run.outcome,
            "iteration_i": ctx.iteration_i,
            "trace": [json.loads(line) for line in export_trace(ctx.trace).splitlines()],
            "claim_evidence": [],
        }
        if record is None:
            payload["answer"] = ctx.messages[-1].content
            return payload
        payload["answer"] = record.answer_text
        payload["abstained"] = record.abstained
        payload["confidence"] = record.final_confidence
        payload["disclaimer"] = record.disclaimer
        evidence_keys = {item.key for item in ctx.evidence}
        for item in record.citations:
            if item.key not in evidence_keys:  # boundary re-assertion
                raise AssertionError("citation outside session evidence")
            payload["citations"].append(
                {
                    "doc_id": str(item.chunk.doc_id),
                    "span_id": item.chunk.span_id,
                    "title": item.chunk.metadata.get("title", ""),
                    "similarity": item.similarity,
                }
            )
        if run.closed_world is not None and not record.abstained:
            claims = {c.claim_id: c for c in run.closed_world.claims}
            for row in run.closed_world.rows:
                payload["claim_evidence"].append(
                    {
                        "claim_id": row.claim_id,
                        "claim_text": claims[row.claim_id].text if row.claim_id in claims else "",
                        "supports": [
                            {
                                "doc_id": str(doc_id),
                                "span_id": span_id,
                                "offsets": list(offsets),
                            }
                            for doc_id, span_id, offsets in row.supports
                        ],
                    }
                )
        return payload

    def upload(self, body: dict) -> dict:
        if self.pipeline is None:
            raise NotFound("no ingestion pipeline configured")
        for key in ("canonical", "filename", "bytes"):
            if key not in body:
                raise RejectedInput(f"upload body missing {key!r}")
        try:
            canonical = CanonicalId.parse(body["canonical"])
        except UncitableSource as exc:
            raise RejectedInput(str(exc)) from exc
        try:
            payload = base64.b64decode(body["bytes"], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise RejectedInput(f"bytes must be base64: {exc}") from exc
        record = self.pipeline.requeue_upload(payload, canonical)
        status = (
            "requeued" if record.status is DocStatus.INGESTED else "needs-manual-fix"
        )
        return {
            "status": status,
            "document_status": record.status.value,
            "canonical": str(canonical),
        }

    def sessions(self) -> dict:
        if self.session_store is None:
            return {"sessions": []}
        out = []
        for session_id in self.session_store.list_ids():
            record = self.session_store.load(session_id)
            out.append(
                {
                    "session_id": record.session_id,
                    "title": record.title,
                    "created_at": record.created_at,
                    "message_count": len(record.messages),
                }
            )
        return {"sessions": out}

    def session(self, session_id: str) -> dict:
        if self.session_store is None:
            raise NotFound("no session store configured")
        record = self.session_store.load(session_id)
        return {
            "session_id": record.session_id,
            "title": record.title,
            "created_at": record.created_at,
            "messages": [m.to_json() for m in record.messages],
        }

    def missing_list(self) -> dict:
        entries = self.pipeline.missing.entries() if self.pipeline else []
        return {"entries": entries}

    def health(self) -> dict:
        return {
            "status": "ok",
            "stores": {
                "index": sum(len(i) for i in self.engine.indexes),
                "sessions": len(self.session_store.list_ids()) if self.session_store else 0,
                "missing_list": len(self.pipeline.missing) if self.pipeline else 0,
            },
        }


class _Handler(BaseHTTPRequestHandler):
    app: App  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default; logging handles it
        logger.debug("http: " + fmt, *args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        data = json.loads(raw.decode("utf-8"))
        if not isinstance(data, dict):
            raise RejectedInput("request body must be a JSON object")
        return data

    def _route(self, method: str) -> None:
        path = self.path.split("?", 1)[0].rstrip("/") or "/"
        try:
            if method == "POST" and path == "/ask":
                self._send(200, self.app.ask(self._body()))
            elif method == "POST" and path == "/upload":
                self._send(200, self.app.upload(self._body()))
            elif method == "GET" and path == "/sessions":
                self._send(200, self.app.sessions())
            elif method == "GET" and path.startswith("/sessions/"):
                self._send(200, self.app.session(path.rsplit("/", 1)[1]))
            elif method == "GET" and path == "/missing-list":
                self._send(200, self.app.missing_list())
            elif method == "GET" and path == "/health":
                self._send(200, self.app.health())
            else:
                self._send(404, {"error": f"no route {method} {path}"})
        except (RejectedInput, json.JSONDecodeError) as exc:
            self._send(400, {"error": str(exc)})
        except NotFound as exc:
            self._send(404, {"error": str(exc)})
        except Exception as exc:  # noqa: BLE001 - boundary: engine aborts -> 500
            trace_id = uuid.uuid4().hex[:12]
            logger.exception("request failed (trace %s)", trace_id)
            self._send(500, {"error": str(exc), "trace_id": trace_id})

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")


def make_server(app: App, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"app": app})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(app: App, host: str = "127.0.0.1", port: int = 8722) -> None:
    server = make_server(app, host, port)
    logger.info("serving on %s:%d", *server.server_address)
    print(f"citegate service listening on http://{server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
