"""Service configuration: model bindings, stores, budgets, provider choice.

A config naming an external backend without usable credentials (or a
registered provider factory) degrades to the scripted backend with a loud
warning so the system stays operable offline.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from citegate.engine import (
    EngineConfig,
    RealClock,
    ResearchEngine,
    SequentialIds,
    VirtualClock,
)
from citegate.errors import ConfigError
from citegate.gateway import (
    ModelRoleBinding,
    PromptGateway,
    Provider,
    RateTable,
    Role,
    ScriptedProvider,
)
from citegate.retrieval import HashingEmbedder, RetrievalConfig, VectorIndex
from citegate.store import MetricsStore, SessionStore

logger = logging.getLogger(__name__)

DEFAULT_MODELS = {
    Role.RELEVANCE: ("gpt-4o-mini", None),
    Role.CONFIDENCE: ("o4-mini", "medium"),
    Role.KNOWLEDGE: ("o4-mini", "medium"),
    Role.FAST_TITLE: ("gpt-4o-mini", None),
    Role.JUDGE: ("o4-mini", "medium"),
}

# USD per 1K tokens; configuration, not vendor truth.
DEFAULT_RATES = {
    "gpt-4o-mini": (0.00015, 0.0006),
    "o4-mini": (0.0011, 0.0044),
}

# Pluggable external backends: name -> factory(config_dict) -> Provider
PROVIDER_FACTORIES: dict[str, callable] = {}

SCRIPTED_FALLBACK_REPLIES = {
    "relevance": ["Relevant: Yes"],
    "confidence": [
        '{"confidence_score": 0.75, "confident": true, '
        '"reasoning": "Scripted fallback verdict."}'
    ],
    "fast_draft": ["Scripted fallback draft."],
    "decomposition": ['["scripted subtopic one", "scripted subtopic two"]'],
    "self_eval": ["0.75"],
    "answer": ["Scripted fallback answer with no grounding available."],
    "title": ["Scripted Fallback Session"],
    "metrics_reasoning": ["{}"],
}


@dataclass
class ServiceConfig:
    backend: str = "scripted"
    scripts: dict = field(default_factory=lambda: dict(SCRIPTED_FALLBACK_REPLIES))
    models: dict = field(default_factory=dict)  # role name -> model id
    reasoning_level: str = "medium"
    temperature: float | None = None
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    answer_gate: float = 0.5
    refinement_budget: int = 5
    schema_retry_budget: int = 3
    subquestion_k: int = 3
    fast_draft: bool = True
    allow_online_search: bool = True
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    summaries_text: str | None = None
    embedder_dim: int = 256
    embedder_seed: int = 13
    index_path: str | None = None
    metrics_path: str | None = None
    sessions_root: str | None = None
    credential_env: str = "CITEGATE_API_KEY"
    deterministic: bool = False  # virtual clock + sequential session ids

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ServiceConfig":
        cfg = cls()
        retrieval = doc.pop("retrieval", None)
        rates = doc.pop("rates", None)
        for key, value in doc.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        if retrieval:
            cfg.retrieval = RetrievalConfig(**retrieval)
        if rates:
            cfg.rates = {m: (v["rate_in"], v["rate_out"]) for m, v in rates.items()}
        if cfg.backend == "scripted" and not cfg.scripts:
            cfg.scripts = dict(SCRIPTED_FALLBACK_REPLIES)
        return cfg


def build_provider(cfg: ServiceConfig) -> Provider:
    if cfg.backend == "scripted":
        return ScriptedProvider(cfg.scripts)
    factory = PROVIDER_FACTORIES.get(cfg.backend)
    has_credentials = bool(os.environ.get(cfg.credential_env))
    if factory is None or not has_credentials:
        reason = (
            "no provider factory registered"
            if factory is None
            else f"missing credentials ({cfg.credential_env} unset)"
        )
        logger.warning(
            "backend %r unavailable (%s); DEGRADING to the scripted backend — "
            "replies are canned, not model output",
            cfg.backend,
            reason,
        )
        return ScriptedProvider(cfg.scripts or dict(SCRIPTED_FALLBACK_REPLIES))
    return factory(cfg)


def build_bindings(cfg: ServiceConfig) -> dict[Role, ModelRoleBinding]:
    bindings = {}
    for role, (default_model, default_effort) in DEFAULT_MODELS.items():
        model_id = cfg.models.get(role.value, default_model)
        effort = cfg.reasoning_level if default_effort is not None else None
        bindings[role] = ModelRoleBinding(role, model_id, effort, cfg.temperature)
    return bindings


def build_gateway(cfg: ServiceConfig, provider: Provider | None = None) -> PromptGateway:
    return PromptGateway(
        provider or build_provider(cfg),
        build_bindings(cfg),
        RateTable(cfg.rates),
        retry_budget=cfg.schema_retry_budget,
    )


def build_engine(
    cfg: ServiceConfig,
    index: VectorIndex | None = None,
    gateway: PromptGateway | None = None,
    session_store: SessionStore | None = None,
) -> ResearchEngine:
    embedder = HashingEmbedder(cfg.embedder_dim, cfg.embedder_seed)
    if index is None:
        index = VectorIndex(embedder)
        if cfg.index_path and Path(cfg.index_path).exists():
            index.import_text(Path(cfg.index_path).read_text(encoding="utf-8"))
    if session_store is None and cfg.sessions_root:
        session_store = SessionStore(cfg.sessions_root)
    engine_cfg = EngineConfig(
        answer_gate=cfg.answer_gate,
        refinement_budget=cfg.refinement_budget,
        schema_retry_budget=cfg.schema_retry_budget,
        subquestion_k=cfg.subquestion_k,
        fast_draft=cfg.fast_draft,
        allow_online_search=cfg.allow_online_search,
        retrieval=cfg.retrieval,
    )
    if cfg.summaries_text:
        engine_cfg.summaries_text = cfg.summaries_text
    return ResearchEngine(
        gateway or build_gateway(cfg),
        index,
        engine_cfg,
        session_store=session_store,
        clock=VirtualClock() if cfg.deterministic else RealClock(),
        id_factory=SequentialIds() if cfg.deterministic else None,
    )


def build_metrics_store(cfg: ServiceConfig) -> MetricsStore:
    return MetricsStore(cfg.metrics_path)
