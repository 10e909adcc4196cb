"""The question controller: drives a session through the state machine.

One engine instance serves one configuration; distinct sessions run fully
in parallel (a SessionContext is single-owner).  All side channels —
clock, session ids, search provider, language-model provider — are
injectable so scripted runs are byte-for-byte reproducible.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from citegate.citations import enforce_closed_world, trim_citations
from citegate.errors import RejectedInput, RunAborted, SchemaExhausted
from citegate.fsm import (
    AnswerRecord,
    FsmState,
    SessionContext,
    StateEvent,
    Subtopic,
    advance,
)
from citegate.gateway import (
    CompletionUsage,
    PromptGateway,
    parse_confidence,
    parse_decomposition,
    parse_relevance,
    parse_subtopic_score,
)
from citegate.retrieval import (
    EvidenceItem,
    RetrievalConfig,
    VectorIndex,
    chunk_document,
    dynamic_k_retrieve,
)
from citegate.canonical import CanonicalId, urlhash
from citegate.store import MessageEntry, SessionRecord, SessionStore, title_session

logger = logging.getLogger(__name__)

DEFAULT_SUMMARIES = (
    "High-speed integrated photonics: electro-optic modulators, detectors, "
    "transceiver components, and their performance metrics (bandwidth, drive "
    "voltage, loss, energy per bit)."
)

REFUSAL_TEXT = (
    "This question falls outside the scope of the configured knowledge base, "
    "so it was not processed further."
)

ABSTAIN_GATE_TEXT = (
    "No answer is provided: the final confidence {score:.2f} is below the "
    "answer gate of {gate:.2f}."
)

ABSTAIN_FIDELITY_TEXT = (
    "No answer is provided: the drafted response could not be grounded in "
    "session evidence after citation verification."
)

DISCLAIMER_TEXT = (
    "Low-confidence answer: the refinement budget was exhausted before all "
    "subtopics reached high confidence (final score {score:.2f}; unresolved: "
    "{unresolved})."
)


class RealClock:
    def now(self) -> float:
        return datetime.now(timezone.utc).timestamp()

    def on_provider_call(self) -> None:
        pass


class VirtualClock:
    """Deterministic clock for scripted runs: time moves only on work."""

    def __init__(self, start: float = 0.0, step: float = 0.5):
        self._t = start
        self.step = step

    def now(self) -> float:
        return self._t

    def on_provider_call(self) -> None:
        self._t += self.step


def uuid4_factory() -> str:
    return str(uuid.uuid4())


class SequentialIds:
    """UUID4-shaped but deterministic session ids for scripted runs."""

    def __init__(self, start: int = 1):
        self._n = start

    def __call__(self) -> str:
        value = uuid.UUID(int=self._n, version=4)
        self._n += 1
        return str(value)


class SearchUnavailable(Exception):
    pass


class SearchProvider:
    """Targeted sub-question search yielding evidence items."""

    def search(self, query: str, k: int, iteration: int) -> list[EvidenceItem]:
        raise NotImplementedError


class LocalSearchProvider(SearchProvider):
    """Searches the engine's own indexes (the offline stand-in for web search)."""

    def __init__(self, indexes: list[VectorIndex]):
        self.indexes = indexes

    def search(self, query: str, k: int, iteration: int) -> list[EvidenceItem]:
        pooled: list[EvidenceItem] = []
        for index in self.indexes:
            pooled.extend(index.query_topk(query, k, iteration))
        pooled.sort(key=lambda e: (-e.similarity, e.key))
        return pooled[:k]


@dataclass
class EngineConfig:
    answer_gate: float = 0.5
    refinement_budget: int = 5
    schema_retry_budget: int = 3
    subquestion_k: int = 3
    fast_draft: bool = True
    allow_online_search: bool = True
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    summaries_text: str = DEFAULT_SUMMARIES


@dataclass
class RunState:
    """Per-run scratch: confidence, loop flags, accumulated usage."""

    final_confidence: float = 0.0
    exhausted: bool = False
    fidelity_failed: bool = False
    outcome: str = "answered"  # answered | irrelevant | abstained
    usage: CompletionUsage = field(default_factory=CompletionUsage)
    search_calls: int = 0
    closed_world = None  # ClosedWorldResult of the final answer pass


class ResearchEngine:
    def __init__(
        self,
        gateway: PromptGateway,
        indexes: list[VectorIndex] | VectorIndex,
        config: EngineConfig | None = None,
        search: SearchProvider | None = None,
        session_store: SessionStore | None = None,
        clock=None,
        id_factory=None,
    ):
        self.gateway = gateway
        self.indexes = [indexes] if isinstance(indexes, VectorIndex) else list(indexes)
        self.config = config or EngineConfig()
        self.search = search if search is not None else LocalSearchProvider(self.indexes)
        self.session_store = session_store
        self.clock = clock or RealClock()
        self.id_factory = id_factory or uuid4_factory
        self.last_run_state: RunState | None = None

    # -- session lifecycle ---------------------------------------------------

    def start_session(
        self, question: str, ingest_flag: bool = False, session_id: str | None = None
    ) -> SessionContext:
        if not question or not question.strip():
            raise RejectedInput("question must be non-empty")
        ctx = SessionContext(
            session_id=session_id or self.id_factory(),
            question=question,
            ingest_flag=ingest_flag,
            retry_budget=self.config.refinement_budget,
        )
        advance(ctx, StateEvent.QUESTION_RECEIVED, self.clock.now())
        self._say(ctx, "user", question)
        return ctx

    def ask(self, question: str, ingest: bool = False, session_id: str | None = None):
        """One-call surface: start a session, run it, return (answer, ctx)."""
        ctx = self.start_session(question, ingest, session_id)
        record = self.run_question(ctx)
        return record, ctx

    # -- the control loop ------------------------------------------------------

    def run_question(self, ctx: SessionContext) -> AnswerRecord | None:
        if ctx.state is not FsmState.RELEVANCE_CHECK:
            raise RejectedInput(f"run_question needs relevance_check, got {ctx.state.value}")
        run = RunState()
        self.last_run_state = run
        record: AnswerRecord | None = None
        try:
            while ctx.state is not FsmState.DONE:
                if ctx.state is FsmState.RELEVANCE_CHECK:
                    self._step_relevance(ctx, run)
                elif ctx.state is FsmState.CONFIDENCE_CHECK:
                    self._step_confidence(ctx, run)
                elif ctx.state is FsmState.DECOMPOSITION:
                    self._step_decomposition(ctx, run)
                elif ctx.state is FsmState.SELF_EVALUATION:
                    self._step_self_evaluation(ctx, run)
                elif ctx.state is FsmState.SEARCH_ONLINE:
                    self.refine_round(ctx)
                elif ctx.state is FsmState.ANSWER:
                    record = self._step_answer(ctx, run)
        except SchemaExhausted as exc:
            raise RunAborted(
                f"provider retries exhausted in state {ctx.state.value}", ctx.trace
            ) from exc
        if run.outcome == "irrelevant":
            record = None
        self._finish(ctx, record)
        return record

    # -- state handlers --------------------------------------------------------

    def _step_relevance(self, ctx: SessionContext, run: RunState) -> None:
        evidence, mean_sim = dynamic_k_retrieve(
            ctx.question, self.indexes, self.config.retrieval, iteration=ctx.iteration_i
        )
        ctx.add_evidence(evidence)
        ctx.mean_similarity = mean_sim
        prompt = self.gateway.render(
            "relevance",
            {
                "question": ctx.question,
                "summaries_text": self.config.summaries_text,
                "sim_score": mean_sim,
            },
        )
        relevant = self._call(run, "relevance", prompt, parse_relevance)
        if relevant:
            advance(ctx, StateEvent.RELEVANT, self.clock.now())
        else:
            run.outcome = "irrelevant"
            self._say(ctx, "assistant", REFUSAL_TEXT)
            advance(ctx, StateEvent.IRRELEVANT, self.clock.now())

    def _step_confidence(self, ctx: SessionContext, run: RunState) -> None:
        prompt = self.gateway.render(
            "confidence",
            {
                "question": ctx.question,
                "base_context": format_context(ctx.evidence),
                "sim_score": ctx.mean_similarity,
            },
        )
        verdict = self._call(run, "confidence", prompt, parse_confidence)
        if self.config.fast_draft:
            draft_prompt = self.gateway.render(
                "fast_draft",
                {"question": ctx.question, "base_context": format_context(ctx.evidence)},
            )
            snippet = self._call(run, "fast_draft", draft_prompt, lambda s: s)
            self._say(ctx, "system", f"fast draft (logged only): {snippet}")
        if verdict.confident:
            run.final_confidence = verdict.confidence_score
            advance(ctx, StateEvent.CONFIDENT, self.clock.now())
        else:
            run.final_confidence = verdict.confidence_score
            advance(ctx, StateEvent.NOT_CONFIDENT, self.clock.now())

    def _step_decomposition(self, ctx: SessionContext, run: RunState) -> None:
        prompt = self.gateway.render("decomposition", {"question": ctx.question})
        topics = self._call(run, "decomposition", prompt, parse_decomposition)
        ctx.subtopics = [Subtopic(text, 0.0) for text in topics]
        advance(ctx, StateEvent.DECOMPOSED, self.clock.now())

    def _step_self_evaluation(self, ctx: SessionContext, run: RunState) -> None:
        subtopics = self.self_evaluate_subtopics(ctx)
        run.final_confidence = min(s.score for s in subtopics)
        if all(s.label == "High" for s in subtopics):
            advance(ctx, StateEvent.ALL_CONFIDENT, self.clock.now())
        elif ctx.iteration_i >= ctx.retry_budget:
            run.exhausted = True
            advance(ctx, StateEvent.BUDGET_EXHAUSTED, self.clock.now())
        else:
            advance(ctx, StateEvent.NEEDS_SEARCH, self.clock.now())

    def self_evaluate_subtopics(self, ctx: SessionContext) -> list[Subtopic]:
        """Score every subtopic on the 5-point scale from current evidence."""
        if not ctx.subtopics:
            raise RejectedInput("no subtopics to evaluate")
        run = self.last_run_state or RunState()
        context_text = format_context(ctx.evidence)
        scored = []
        for subtopic in ctx.subtopics:
            prompt = self.gateway.render(
                "self_eval", {"topic": subtopic.text, "base_context": context_text}
            )
            score = self._call(run, "self_eval", prompt, parse_subtopic_score)
            scored.append(Subtopic(subtopic.text, score))
        ctx.subtopics = scored
        return scored

    def refine_round(self, ctx: SessionContext) -> SessionContext:
        """One bounded search round over the Low/Medium subtopics."""
        if ctx.state is not FsmState.SEARCH_ONLINE:
            raise RejectedInput(f"refine_round needs search_online, got {ctx.state.value}")
        weak = [s for s in ctx.subtopics if s.label in ("Low", "Medium")]
        if not weak:
            raise RejectedInput("refine_round needs at least one Low/Medium subtopic")
        if ctx.iteration_i >= ctx.retry_budget:
            raise RejectedInput("refinement budget already exhausted")
        run = self.last_run_state or RunState()
        for subtopic in weak:
            if not self.config.allow_online_search:
                continue
            try:
                found = self.search.search(
                    subtopic.text, self.config.subquestion_k, ctx.iteration_i + 1
                )
                run.search_calls += 1
                self.clock.on_provider_call()
            except SearchUnavailable as exc:
                logger.warning("search provider unavailable: %s", exc)
                self._say(ctx, "system", f"search unavailable for subtopic: {subtopic.text}")
                continue
            ctx.add_evidence(found)
        ctx.iteration_i += 1
        advance(ctx, StateEvent.SEARCH_COMPLETE, self.clock.now())
        return ctx

    def _step_answer(self, ctx: SessionContext, run: RunState) -> AnswerRecord:
        prompt = self.gateway.render(
            "answer",
            {
                "question": ctx.question,
                "base_context": format_context(ctx.evidence),
                "confidence": run.final_confidence,
                "mean_sim": ctx.mean_similarity,
            },
        )
        draft = self._call(run, "answer", prompt, lambda s: s)
        result = enforce_closed_world(draft, ctx.evidence)
        run.closed_world = result
        if not result.passed and not ctx.back_edge_used:
            # one back-edge to relevance before abstaining
            ctx.back_edge_used = True
            advance(ctx, StateEvent.FIDELITY_RETRY, self.clock.now())
            return None  # loop re-enters at relevance_check
        if not result.passed:
            run.fidelity_failed = True
            run.final_confidence = 0.0

        gate = self.config.answer_gate
        abstained = run.final_confidence < gate
        disclaimer = None
        if run.fidelity_failed:
            run.outcome = "abstained"
            text = ABSTAIN_FIDELITY_TEXT
            disclaimer = ABSTAIN_FIDELITY_TEXT
            citations: list[EvidenceItem] = []
        elif abstained:
            run.outcome = "abstained"
            text = ABSTAIN_GATE_TEXT.format(score=run.final_confidence, gate=gate)
            disclaimer = text
            citations = []
        else:
            text = result.answer_text
            citations = trim_citations(result.citations)
            if run.exhausted:
                unresolved = ", ".join(
                    s.text for s in ctx.subtopics if s.label != "High"
                ) or "none"
                disclaimer = DISCLAIMER_TEXT.format(
                    score=run.final_confidence, unresolved=unresolved
                )
                text = f"{disclaimer}\n\n{text}"
        record = AnswerRecord(text, citations, run.final_confidence, abstained, disclaimer)
        self._say(ctx, "assistant", text)
        advance(ctx, StateEvent.ANSWER_COMPOSED, self.clock.now())
        return record

    # -- plumbing ---------------------------------------------------------------

    def _call(self, run: RunState, tag: str, prompt: str, parser):
        self.clock.on_provider_call()
        try:
            value, usage = self.gateway.complete_with_retry(
                tag, prompt, parser, self.config.schema_retry_budget
            )
        except SchemaExhausted as exc:
            if exc.usage is not None:
                run.usage = run.usage + exc.usage
            raise
        run.usage = run.usage + usage
        return value

    def _say(self, ctx: SessionContext, role: str, content: str) -> None:
        ctx.messages.append(
            MessageEntry(role, content, _iso(self.clock.now()))
        )

    def _finish(self, ctx: SessionContext, record: AnswerRecord | None) -> None:
        if ctx.ingest_flag and record is not None and not record.abstained:
            self._ingest_session(ctx, record)
        if self.session_store is not None:
            self._persist(ctx)

    def _ingest_session(self, ctx: SessionContext, record: AnswerRecord) -> None:
        """Append the final Q+A pair to the vector store for future sessions."""
        doc_id = CanonicalId("urlhash", urlhash(f"https://sessions.local/{ctx.session_id}"))
        text = f"Q: {ctx.question}\nA: {record.answer_text}"
        chunks = chunk_document(
            doc_id, text, {"title": f"Session note: {ctx.question[:60]}", "source": "session"}
        )
        self.indexes[0].add(chunks)

    def _persist(self, ctx: SessionContext) -> None:
        try:
            title = title_session(
                f"Q: {ctx.question}", self.gateway,
            )
        except Exception:
            title = "Untitled Session (draft)"
        self.session_store.persist(
            SessionRecord(ctx.session_id, title, list(ctx.messages), _iso(self.clock.now()))
        )


def format_context(evidence: list[EvidenceItem]) -> str:
    """Evidence listing given to prompts; carries copyable citation markers."""
    if not evidence:
        return "(no retrieved context)"
    lines = []
    for item in evidence:
        marker = f"[[cite: {item.chunk.doc_id} # {item.chunk.span_id}]]"
        title = item.chunk.metadata.get("title", "")
        lines.append(f"- sim={item.similarity:.2f} {marker} {title}: {item.chunk.text}")
    return "\n".join(lines)


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()
