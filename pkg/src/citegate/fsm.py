"""Question-processing state machine: states, events, legal edges, traces.

The machine is deliberately rigid — every transition an engine run takes
must be an edge declared here, and every transition is recorded so a trace
can be audited after the fact.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum

from citegate.errors import InvalidTransition, RejectedInput
from citegate.gateway import SCORE_SET, score_label
from citegate.retrieval import EvidenceItem

RETRY_BUDGET = 5  # bounded refinement iterations per question


class FsmState(Enum):
    IDLE = "idle"
    RELEVANCE_CHECK = "relevance_check"
    CONFIDENCE_CHECK = "confidence_check"
    DECOMPOSITION = "decomposition"
    SELF_EVALUATION = "self_evaluation"
    SEARCH_ONLINE = "search_online"
    ANSWER = "answer"
    DONE = "done"


class StateEvent(Enum):
    QUESTION_RECEIVED = "question_received"
    IRRELEVANT = "irrelevant"
    RELEVANT = "relevant"
    CONFIDENT = "confident"
    NOT_CONFIDENT = "not_confident"
    DECOMPOSED = "decomposed"
    ALL_CONFIDENT = "all_confident"
    NEEDS_SEARCH = "needs_search"
    BUDGET_EXHAUSTED = "budget_exhausted"
    SEARCH_COMPLETE = "search_complete"
    ANSWER_COMPOSED = "answer_composed"
    # citation fidelity failed once: re-enter at relevance, at most once per run
    FIDELITY_RETRY = "fidelity_retry"


TRANSITIONS: dict[tuple[FsmState, StateEvent], FsmState] = {
    (FsmState.IDLE, StateEvent.QUESTION_RECEIVED): FsmState.RELEVANCE_CHECK,
    (FsmState.RELEVANCE_CHECK, StateEvent.IRRELEVANT): FsmState.DONE,
    (FsmState.RELEVANCE_CHECK, StateEvent.RELEVANT): FsmState.CONFIDENCE_CHECK,
    (FsmState.CONFIDENCE_CHECK, StateEvent.CONFIDENT): FsmState.ANSWER,
    (FsmState.CONFIDENCE_CHECK, StateEvent.NOT_CONFIDENT): FsmState.DECOMPOSITION,
    (FsmState.DECOMPOSITION, StateEvent.DECOMPOSED): FsmState.SELF_EVALUATION,
    (FsmState.SELF_EVALUATION, StateEvent.ALL_CONFIDENT): FsmState.ANSWER,
    (FsmState.SELF_EVALUATION, StateEvent.NEEDS_SEARCH): FsmState.SEARCH_ONLINE,
    (FsmState.SELF_EVALUATION, StateEvent.BUDGET_EXHAUSTED): FsmState.ANSWER,
    (FsmState.SEARCH_ONLINE, StateEvent.SEARCH_COMPLETE): FsmState.SELF_EVALUATION,
    (FsmState.ANSWER, StateEvent.ANSWER_COMPOSED): FsmState.DONE,
    (FsmState.ANSWER, StateEvent.FIDELITY_RETRY): FsmState.RELEVANCE_CHECK,
}

LEGAL_EDGES: frozenset[tuple[FsmState, FsmState]] = frozenset(
    (src, dst) for (src, _), dst in TRANSITIONS.items()
)


def validate_score(value: float) -> float:
    if value not in SCORE_SET:
        raise RejectedInput(f"confidence score {value} not in {SCORE_SET}")
    return value


@dataclass(frozen=True)
class Subtopic:
    text: str
    score: float

    def __post_init__(self):
        validate_score(self.score)

    @property
    def label(self) -> str:
        return score_label(self.score)


@dataclass
class AnswerRecord:
    """Final product of a run: text, closed-world citations, gate outcome."""

    answer_text: str
    citations: list[EvidenceItem]
    final_confidence: float
    abstained: bool
    disclaimer: str | None = None


@dataclass(frozen=True)
class TransitionRecord:
    src: FsmState
    dst: FsmState
    event: StateEvent
    timestamp: float
    iteration_i: int

    def to_line(self) -> str:
        return json.dumps(
            {
                "from": self.src.value,
                "to": self.dst.value,
                "event": self.event.value,
                "timestamp": self.timestamp,
                "iteration_i": self.iteration_i,
            },
            separators=(",", ":"),
        )


@dataclass
class SessionContext:
    """The evolving record of one question run (single-owner)."""

    session_id: str
    question: str
    state: FsmState = FsmState.IDLE
    iteration_i: int = 0
    subtopics: list[Subtopic] = field(default_factory=list)
    evidence: list[EvidenceItem] = field(default_factory=list)
    mean_similarity: float = 0.0
    ingest_flag: bool = False
    messages: list = field(default_factory=list)
    trace: list[TransitionRecord] = field(default_factory=list)
    retry_budget: int = RETRY_BUDGET
    back_edge_used: bool = False
    _evidence_keys: set = field(default_factory=set, repr=False)

    def add_evidence(self, items: list[EvidenceItem]) -> int:
        """Merge items into the pool, deduplicated by (doc_id, span_id)."""
        added = 0
        for item in items:
            if item.key not in self._evidence_keys:
                self._evidence_keys.add(item.key)
                self.evidence.append(item)
                added += 1
        return added

    @property
    def refinement_iterations(self) -> int:
        return sum(1 for rec in self.trace if rec.dst is FsmState.SEARCH_ONLINE)


def advance(ctx: SessionContext, event: StateEvent, now: float | None = None) -> SessionContext:
    """Take one legal edge; Done is terminal and immutable."""
    if ctx.state is FsmState.DONE:
        raise InvalidTransition(ctx.state, event)
    target = TRANSITIONS.get((ctx.state, event))
    if target is None:
        raise InvalidTransition(ctx.state, event)
    if ctx.iteration_i > ctx.retry_budget:
        raise RejectedInput(
            f"iteration counter {ctx.iteration_i} exceeds budget {ctx.retry_budget}"
        )
    ctx.trace.append(
        TransitionRecord(
            ctx.state,
            target,
            event,
            time.time() if now is None else now,
            ctx.iteration_i,
        )
    )
    ctx.state = target
    return ctx


def export_trace(trace: list[TransitionRecord]) -> str:
    """Newline-delimited transition records, one JSON object per line."""
    return "\n".join(rec.to_line() for rec in trace) + ("\n" if trace else "")


def trace_is_legal(trace: list[TransitionRecord]) -> bool:
    """Every consecutive pair must be a declared edge and chain correctly."""
    for prev, cur in zip(trace, trace[1:]):
        if prev.dst is not cur.src:
            return False
    return all((rec.src, rec.dst) in LEGAL_EDGES for rec in trace)
