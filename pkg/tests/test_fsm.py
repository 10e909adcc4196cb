"""State machine: edges, terminal behavior, trace export."""

from __future__ import annotations

import json

import pytest

from citegate.errors import InvalidTransition, RejectedInput
from citegate.fsm import (
    LEGAL_EDGES,
    TRANSITIONS,
    FsmState,
    SessionContext,
    StateEvent,
    Subtopic,
    advance,
    export_trace,
    trace_is_legal,
)

from conftest import make_chunk, make_evidence


def fresh(state=FsmState.IDLE) -> SessionContext:
    ctx = SessionContext("sid-1", "why is the sky blue?")
    ctx.state = state
    return ctx


def test_irrelevant_goes_to_done():
    ctx = fresh(FsmState.RELEVANCE_CHECK)
    advance(ctx, StateEvent.IRRELEVANT, now=1.0)
    assert ctx.state is FsmState.DONE


def test_not_confident_goes_to_decomposition():
    ctx = fresh(FsmState.CONFIDENCE_CHECK)
    advance(ctx, StateEvent.NOT_CONFIDENT, now=1.0)
    assert ctx.state is FsmState.DECOMPOSITION


def test_done_is_terminal():
    ctx = fresh(FsmState.DONE)
    for event in StateEvent:
        with pytest.raises(InvalidTransition):
            advance(ctx, event, now=1.0)
    assert ctx.state is FsmState.DONE
    assert ctx.trace == []


def test_illegal_edge_names_endpoints():
    ctx = fresh(FsmState.RELEVANCE_CHECK)
    with pytest.raises(InvalidTransition) as err:
        advance(ctx, StateEvent.SEARCH_COMPLETE, now=1.0)
    assert err.value.state is FsmState.RELEVANCE_CHECK
    assert err.value.event is StateEvent.SEARCH_COMPLETE


def test_full_walk_is_legal_and_recorded():
    ctx = fresh()
    walk = [
        StateEvent.QUESTION_RECEIVED,
        StateEvent.RELEVANT,
        StateEvent.NOT_CONFIDENT,
        StateEvent.DECOMPOSED,
        StateEvent.NEEDS_SEARCH,
        StateEvent.SEARCH_COMPLETE,
        StateEvent.ALL_CONFIDENT,
        StateEvent.ANSWER_COMPOSED,
    ]
    for i, event in enumerate(walk):
        advance(ctx, event, now=float(i))
    assert ctx.state is FsmState.DONE
    assert len(ctx.trace) == len(walk)
    assert trace_is_legal(ctx.trace)


def test_trace_export_format():
    ctx = fresh(FsmState.RELEVANCE_CHECK)
    advance(ctx, StateEvent.RELEVANT, now=2.5)
    text = export_trace(ctx.trace)
    lines = text.splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record == {
        "from": "relevance_check",
        "to": "confidence_check",
        "event": "relevant",
        "timestamp": 2.5,
        "iteration_i": 0,
    }


def test_every_declared_edge_is_walkable():
    for (src, event), dst in TRANSITIONS.items():
        ctx = fresh(src)
        advance(ctx, event, now=0.0)
        assert ctx.state is dst
        assert (src, dst) in LEGAL_EDGES


def test_evidence_pool_dedup_and_monotone():
    ctx = fresh()
    a = make_evidence(make_chunk("10.1/a", 0), 0.9)
    b = make_evidence(make_chunk("10.1/b", 0), 0.8)
    assert ctx.add_evidence([a, b]) == 2
    assert ctx.add_evidence([make_evidence(make_chunk("10.1/a", 0), 0.5)]) == 0
    assert len(ctx.evidence) == 2
    keys = [item.key for item in ctx.evidence]
    assert len(set(keys)) == len(keys)


def test_subtopic_label_derivation():
    assert Subtopic("t", 0.0).label == "Low"
    assert Subtopic("t", 0.25).label == "Low"
    assert Subtopic("t", 0.5).label == "Medium"
    assert Subtopic("t", 0.75).label == "High"
    assert Subtopic("t", 1.0).label == "High"
    with pytest.raises(RejectedInput):
        Subtopic("t", 0.6)


def test_iteration_budget_guard():
    ctx = fresh(FsmState.SELF_EVALUATION)
    ctx.iteration_i = 6  # beyond the budget of 5
    with pytest.raises(RejectedInput):
        advance(ctx, StateEvent.NEEDS_SEARCH, now=0.0)


def test_trace_chain_detection():
    ctx = fresh(FsmState.RELEVANCE_CHECK)
    advance(ctx, StateEvent.RELEVANT, now=0.0)
    other = fresh(FsmState.ANSWER)
    advance(other, StateEvent.ANSWER_COMPOSED, now=0.0)
    # stitched traces from different sessions do not chain
    assert not trace_is_legal(ctx.trace + other.trace)
