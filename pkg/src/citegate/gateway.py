"""Provider abstraction, role-segmented prompts, and strict reply schemas.

Every control-plane state talks to its model through this module: render a
state-tagged template, call the provider, validate the reply against the
state's rigid output format, and retry on divergence up to a budget.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from enum import Enum

from citegate.errors import (
    ConfigError,
    RejectedInput,
    RenderError,
    SchemaExhausted,
    SchemaViolation,
)

SCORE_SET = (0.0, 0.25, 0.5, 0.75, 1.0)
CONFIDENT_FLOOR = 0.75
MAX_REASONING_WORDS = 25


class Role(Enum):
    RELEVANCE = "relevance"
    CONFIDENCE = "confidence"
    KNOWLEDGE = "knowledge"
    FAST_TITLE = "fast_title"
    JUDGE = "judge"


# Which role answers each state-tagged prompt.
ROLE_FOR_TAG: dict[str, Role] = {
    "relevance": Role.RELEVANCE,
    "confidence": Role.CONFIDENCE,
    "fast_draft": Role.KNOWLEDGE,
    "decomposition": Role.KNOWLEDGE,
    "self_eval": Role.CONFIDENCE,
    "answer": Role.KNOWLEDGE,
    "title": Role.FAST_TITLE,
    "metrics_reasoning": Role.KNOWLEDGE,
    "judge": Role.JUDGE,
}


@dataclass(frozen=True)
class ModelRoleBinding:
    role: Role
    model_id: str
    reasoning_effort: str | None = None  # low | medium | high | None
    temperature: float | None = None  # None = provider preset

    def __post_init__(self):
        if self.reasoning_effort not in (None, "low", "medium", "high"):
            raise ConfigError(f"bad reasoning effort: {self.reasoning_effort!r}")


@dataclass(frozen=True)
class CompletionUsage:
    token_in: int = 0
    token_out: int = 0
    cost_usd: float = 0.0

    def __add__(self, other: "CompletionUsage") -> "CompletionUsage":
        return CompletionUsage(
            self.token_in + other.token_in,
            self.token_out + other.token_out,
            self.cost_usd + other.cost_usd,
        )


class RateTable:
    """model_id -> (rate_in, rate_out) in USD per 1K tokens."""

    def __init__(self, rates: dict[str, tuple[float, float]] | None = None):
        self._rates = dict(rates or {})

    @classmethod
    def from_file(cls, path) -> "RateTable":
        raw = json.loads(open(path, encoding="utf-8").read())
        return cls({m: (v["rate_in"], v["rate_out"]) for m, v in raw.items()})

    def cost(self, model_id: str, token_in: int, token_out: int) -> float:
        rate_in, rate_out = self._rates.get(model_id, (0.0, 0.0))
        return token_in * rate_in / 1000.0 + token_out * rate_out / 1000.0


@dataclass(frozen=True)
class PromptTemplate:
    role: Role
    state_tag: str
    body: str

    def render(self, bindings: dict) -> str:
        """Fill placeholders; identical bindings yield byte-identical text."""
        try:
            return self.body.format_map(bindings)
        except (KeyError, IndexError) as exc:
            name = exc.args[0] if exc.args else "?"
            raise RenderError(str(name)) from exc


@dataclass(frozen=True)
class ProviderReply:
    text: str
    token_in: int
    token_out: int


class Provider:
    """Text-in/text-out completion backend with declared token usage."""

    def complete(self, binding: ModelRoleBinding, prompt: str, state_tag: str) -> ProviderReply:
        raise NotImplementedError


def _estimate_tokens(text: str) -> int:
    return max(1, (len(text) + 3) // 4)


class ScriptedProvider(Provider):
    """Deterministic offline backend: replies come from per-tag queues.

    With ``repeat_last`` the final queued reply answers every further call
    on that tag; otherwise an exhausted queue is a scripting error.  Every
    call is appended to ``call_log`` for test oracles.
    """

    def __init__(self, scripts: dict[str, list[str]], repeat_last: bool = True):
        self._queues = {tag: list(replies) for tag, replies in scripts.items()}
        self.repeat_last = repeat_last
        self.call_log: list[tuple[str, str]] = []

    def complete(self, binding: ModelRoleBinding, prompt: str, state_tag: str) -> ProviderReply:
        self.call_log.append((state_tag, prompt))
        queue = self._queues.get(state_tag)
        if not queue:
            raise ConfigError(f"scripted provider has no replies for tag {state_tag!r}")
        reply = queue[0] if len(queue) == 1 and self.repeat_last else queue.pop(0)
        return ProviderReply(reply, _estimate_tokens(prompt), _estimate_tokens(reply))


# -- strict reply parsers ---------------------------------------------------


def parse_relevance(reply: str) -> bool:
    """Accept exactly 'Relevant: Yes' or 'Relevant: No' (outer whitespace ok)."""
    text = reply.strip()
    if text == "Relevant: Yes":
        return True
    if text == "Relevant: No":
        return False
    raise SchemaViolation(f"relevance reply not in strict format: {reply!r}")


@dataclass(frozen=True)
class ConfidenceVerdict:
    confidence_score: float
    confident: bool
    reasoning: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "confidence_score": self.confidence_score,
                "confident": self.confident,
                "reasoning": self.reasoning,
            }
        )


def parse_confidence(reply: str) -> ConfidenceVerdict:
    try:
        data = json.loads(reply)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"confidence reply is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("confidence reply must be a single JSON object")
    expected = {"confidence_score", "confident", "reasoning"}
    if set(data.keys()) != expected:
        raise SchemaViolation(f"confidence keys {sorted(data.keys())} != {sorted(expected)}")
    score = data["confidence_score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)) or float(score) not in SCORE_SET:
        raise SchemaViolation(f"confidence_score {score!r} not in {SCORE_SET}")
    score = float(score)
    confident = data["confident"]
    if not isinstance(confident, bool):
        raise SchemaViolation("confident must be a boolean")
    if confident != (score >= CONFIDENT_FLOOR):
        raise SchemaViolation(
            f"confident={confident} inconsistent with score {score} (floor {CONFIDENT_FLOOR})"
        )
    reasoning = data["reasoning"]
    if not isinstance(reasoning, str) or "\n" in reasoning:
        raise SchemaViolation("reasoning must be a single line of text")
    if len(reasoning.split()) > MAX_REASONING_WORDS:
        raise SchemaViolation(f"reasoning exceeds {MAX_REASONING_WORDS} words")
    return ConfidenceVerdict(score, confident, reasoning)


def parse_decomposition(reply: str) -> list[str]:
    """A flat list literal of 2-3 distinct, non-empty strings."""
    try:
        value = ast.literal_eval(reply.strip())
    except (ValueError, SyntaxError) as exc:
        raise SchemaViolation(f"decomposition reply is not a list literal: {exc}") from exc
    if not isinstance(value, list):
        raise SchemaViolation("decomposition must be a list")
    if not all(isinstance(item, str) for item in value):
        raise SchemaViolation("decomposition items must all be strings")
    if not 2 <= len(value) <= 3:
        raise SchemaViolation(f"decomposition needs 2-3 subtopics, got {len(value)}")
    if any(not item.strip() for item in value):
        raise SchemaViolation("decomposition items must be non-empty")
    if len(set(value)) != len(value):
        raise SchemaViolation("decomposition items must be distinct")
    return value


def parse_subtopic_score(reply: str) -> float:
    """A single float drawn from the 5-point score set."""
    text = reply.strip()
    if not re.fullmatch(r"[01](\.\d+)?|0?\.\d+", text):
        raise SchemaViolation(f"subtopic score is not a bare float: {reply!r}")
    score = float(text)
    if score not in SCORE_SET:
        raise SchemaViolation(f"subtopic score {score} not in {SCORE_SET}")
    return score


def score_label(score: float) -> str:
    """Map a 5-point score to Low / Medium / High."""
    if score not in SCORE_SET:
        raise SchemaViolation(f"score {score} not in {SCORE_SET}")
    if score >= CONFIDENT_FLOOR:
        return "High"
    if score == 0.5:
        return "Medium"
    return "Low"


# -- state-tagged templates --------------------------------------------------

TEMPLATES: dict[str, PromptTemplate] = {
    "relevance": PromptTemplate(
        Role.RELEVANCE,
        "relevance",
        (
            "STATE: Relevance Check\n"
            "Decide whether the question below falls inside the knowledge base "
            "described by the domain summaries. The mean similarity score of the "
            "retrieved context is {sim_score:.2f}; weigh it when deciding.\n\n"
            "Domain summaries:\n{summaries_text}\n\n"
            "Question: {question}\n\n"
            "Reply with exactly one line, either:\n"
            "Relevant: Yes\n"
            "--or--\n"
            "Relevant: No"
        ),
    ),
    "confidence": PromptTemplate(
        Role.CONFIDENCE,
        "confidence",
        (
            "STATE: Confidence Check\n"
            "Judge whether the question can be answered from the context below "
            "plus settled domain knowledge. Do not answer it.\n"
            "Mean similarity of retrieved context: {sim_score:.2f}.\n\n"
            "Context:\n{base_context}\n\n"
            "Question: {question}\n\n"
            "Reply with STRICT JSON holding EXACT keys confidence_score, confident, "
            "reasoning and nothing else.\n"
            "- confidence_score: one of [0.0, 0.25, 0.5, 0.75, 1.0]\n"
            "- confident: true only when confidence_score >= 0.75\n"
            "- reasoning: one line, at most 25 words"
        ),
    ),
    "fast_draft": PromptTemplate(
        Role.KNOWLEDGE,
        "fast_draft",
        (
            "STATE: Confidence Check (draft)\n"
            "Write a brief single-pass draft answer for logging purposes only. "
            "It is never shown to the user.\n\n"
            "Context:\n{base_context}\n\n"
            "Question: {question}"
        ),
    ),
    "decomposition": PromptTemplate(
        Role.KNOWLEDGE,
        "decomposition",
        (
            "STATE: Question Decomposition\n"
            "Split the question into 2-3 narrow, technically concrete subtopics "
            "along dimensions such as device physics, system impact, or "
            "implementation challenges. No generalities.\n\n"
            'Question: "{question}"\n\n'
            "Reply with only a valid Python list of strings."
        ),
    ),
    "self_eval": PromptTemplate(
        Role.CONFIDENCE,
        "self_eval",
        (
            "STATE: Self-Evaluation\n"
            'For the subtopic "{topic}", rate your confidence in answering from '
            "the context below alone.\n"
            "Reply with a single float from [0.0, 0.25, 0.5, 0.75, 1.0]:\n"
            "- 1.0 fully confident\n"
            "- 0.75 confident, minor uncertainty\n"
            "- 0.5 moderate understanding, needs verification\n"
            "- 0.25 partial knowledge\n"
            "- 0.0 no meaningful understanding\n\n"
            "Context:\n{base_context}"
        ),
    ),
    "answer": PromptTemplate(
        Role.KNOWLEDGE,
        "answer",
        (
            "STATE: Answer\n"
            "Compose a rigorous, well-organized answer from the context below and "
            "settled domain knowledge only. Never invent sources.\n"
            "Cite evidence inline using markers of the form "
            "[[cite: <kind>:<value> # <span_id>]] copied from the context listing.\n"
            "Internal notes: retrieval confidence {confidence:.2f}, mean context "
            "similarity {mean_sim:.2f}.\n\n"
            "Context:\n{base_context}\n\n"
            "Question: {question}"
        ),
    ),
    "title": PromptTemplate(
        Role.FAST_TITLE,
        "title",
        (
            "Write a concise session title of 3-6 words for the exchange below. "
            "Reply with the title only.\n\n{first_exchange}"
        ),
    ),
    "metrics_reasoning": PromptTemplate(
        Role.KNOWLEDGE,
        "metrics_reasoning",
        (
            "Fill the metric fields still missing after rule-based extraction.\n"
            "Reply with STRICT JSON matching this template (omit unknown fields):\n"
            "{schema}\n\n"
            "Document excerpt:\n{excerpt}"
        ),
    ),
}


class PromptGateway:
    """Render, complete, validate, retry — with token and cost accounting."""

    def __init__(
        self,
        provider: Provider,
        bindings: dict[Role, ModelRoleBinding],
        rates: RateTable | None = None,
        retry_budget: int = 3,
        on_usage=None,
    ):
        self.provider = provider
        self.bindings = dict(bindings)
        self.rates = rates or RateTable()
        self.retry_budget = retry_budget
        self.on_usage = on_usage  # callable(CompletionUsage) | None

    def binding_for_tag(self, state_tag: str) -> ModelRoleBinding:
        role = ROLE_FOR_TAG.get(state_tag)
        if role is None:
            raise ConfigError(f"unknown state tag {state_tag!r}")
        binding = self.bindings.get(role)
        if binding is None:
            raise ConfigError(f"no model bound for role {role.value!r}")
        return binding

    def complete_with_retry(
        self,
        state_tag: str,
        prompt: str,
        parser,
        budget: int | None = None,
    ):
        """Call the provider up to ``budget`` times until the parser accepts.

        Returns (parsed_value, usage) with usage summed across attempts.
        """
        budget = self.retry_budget if budget is None else budget
        if budget < 1:
            raise RejectedInput("retry budget must be >= 1")
        binding = self.binding_for_tag(state_tag)
        usage = CompletionUsage()
        last_reply = ""
        for _ in range(budget):
            reply = self.provider.complete(binding, prompt, state_tag)
            last_reply = reply.text
            usage = usage + CompletionUsage(
                reply.token_in,
                reply.token_out,
                self.rates.cost(binding.model_id, reply.token_in, reply.token_out),
            )
            try:
                value = parser(reply.text)
            except SchemaViolation:
                continue
            if self.on_usage:
                self.on_usage(usage)
            return value, usage
        if self.on_usage:
            self.on_usage(usage)
        raise SchemaExhausted(
            f"{state_tag}: no schema-conforming reply within budget {budget}",
            last_reply,
            usage,
        )

    def render(self, state_tag: str, bindings: dict) -> str:
        template = TEMPLATES.get(state_tag)
        if template is None:
            raise ConfigError(f"no template for state tag {state_tag!r}")
        return template.render(bindings)
