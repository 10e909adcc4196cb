"""Command-line surface: ask | ingest | sweep | calibrate | report | serve.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from types import SimpleNamespace

from citegate.config import ServiceConfig, build_engine, build_gateway
from citegate.engine import SequentialIds, VirtualClock
from citegate.errors import CitegateError
from citegate.gateway import Role, ScriptedProvider
from citegate.harness import (
    DEFAULT_FACTORS,
    aggregate_efficiency,
    build_manifest,
    compute_aurc,
    compute_ece,
    isotonic_calibrate,
    load_questions,
    run_sweep,
    write_csv,
)
from citegate.ingest import IngestionPipeline, SyntheticCorpus
from citegate.retrieval import HashingEmbedder, VectorIndex
from citegate.service import App, serve_forever
from citegate.store import MetricsStore, SessionStore


def _add_model_flags(parser: argparse.ArgumentParser, multi: bool = False) -> None:
    note = " (comma-separated levels)" if multi else ""
    parser.add_argument("--system-id", default="citegate")
    parser.add_argument("--relevance-model", help=f"relevance gate model{note}")
    parser.add_argument("--confidence-model", help=f"confidence judge model{note}")
    parser.add_argument("--knowledge-model", help=f"knowledge/answer model{note}")
    parser.add_argument("--reasoning-level", help=f"low|medium|high{note}")
    parser.add_argument("--temperature", help=f"sampling temperature override{note}")
    parser.add_argument("--retrieval-k", help=f"top-k context chunks{note}")
    parser.add_argument("--allow-online-search", help=f"true|false{note}")


def _load_config(args) -> ServiceConfig:
    if getattr(args, "config", None):
        return ServiceConfig.from_file(args.config)
    return ServiceConfig()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="citegate")
    parser.add_argument("--config", help="service config JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ask = sub.add_parser("ask", help="run one question through the engine")
    p_ask.add_argument("question")
    p_ask.add_argument("--ingest", action="store_true")
    p_ask.add_argument("--index", help="vector index file to load")
    p_ask.add_argument("--out", help="write the JSON result here")
    _add_model_flags(p_ask)

    p_ingest = sub.add_parser("ingest", help="run the ingestion pipeline once")
    p_ingest.add_argument("--corpus", required=True, help="synthetic corpus directory")
    p_ingest.add_argument("--out", help="directory for store exports")
    p_ingest.add_argument("--axes", help="JSON file with keyword axes")

    p_sweep = sub.add_parser("sweep", help="build and execute a factorial manifest")
    p_sweep.add_argument("--questions", required=True, help="question-set JSONL")
    p_sweep.add_argument("--index", help="vector index file to load")
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", required=True, help="results CSV path")
    _add_model_flags(p_sweep, multi=True)

    p_cal = sub.add_parser("calibrate", help="ECE/AURC before and after isotonic fit")
    p_cal.add_argument("--in", dest="infile", required=True, help="judged results CSV")
    p_cal.add_argument("--bins", type=int, default=10)
    p_cal.add_argument("--correct-column", default="correct")
    p_cal.add_argument("--out", help="write the JSON report here")

    p_rep = sub.add_parser("report", help="efficiency aggregates and store queries")
    p_rep.add_argument("--in", dest="infile", help="results CSV")
    p_rep.add_argument("--metrics", help="metrics store file for pareto/trend")
    p_rep.add_argument("--pareto", help="two metric fields, comma-separated")
    p_rep.add_argument("--sense", default="max,max", help="per-axis min|max")
    p_rep.add_argument("--trend", help="metric field for the yearly trend")
    p_rep.add_argument("--out", help="write the JSON report here")

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8722)
    p_serve.add_argument("--corpus", help="ingest this corpus at startup")
    p_serve.add_argument("--sessions-root", help="override session directory")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    try:
        return _dispatch(args)
    except CitegateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    handler = {
        "ask": _cmd_ask,
        "ingest": _cmd_ingest,
        "sweep": _cmd_sweep,
        "calibrate": _cmd_calibrate,
        "report": _cmd_report,
        "serve": _cmd_serve,
    }[args.command]
    return handler(args)


def _apply_single_overrides(cfg: ServiceConfig, args) -> ServiceConfig:
    if args.relevance_model:
        cfg.models["relevance"] = args.relevance_model
    if args.confidence_model:
        cfg.models["confidence"] = args.confidence_model
    if args.knowledge_model:
        cfg.models["knowledge"] = args.knowledge_model
    if args.reasoning_level:
        cfg.reasoning_level = args.reasoning_level
    if args.temperature:
        cfg.temperature = float(args.temperature)
    if args.retrieval_k:
        k = int(args.retrieval_k)
        if k < 1:
            raise CitegateError("--retrieval-k must be a positive integer")
        cfg.retrieval = replace(cfg.retrieval, top_l=k)
    if args.allow_online_search:
        cfg.allow_online_search = args.allow_online_search.lower() in ("true", "1", "yes")
    return cfg


def _cmd_ask(args) -> int:
    cfg = _apply_single_overrides(_load_config(args), args)
    if args.index:
        cfg.index_path = args.index
    engine = build_engine(cfg)
    app = App(engine)
    result = app.ask({"question": args.question, "ingest": args.ingest})
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def _cmd_ingest(args) -> int:
    cfg = _load_config(args)
    corpus = SyntheticCorpus(args.corpus)
    axes = (
        json.loads(Path(args.axes).read_text(encoding="utf-8"))
        if args.axes
        else _axes_from_corpus(corpus)
    )
    embedder = HashingEmbedder(cfg.embedder_dim, cfg.embedder_seed)
    index = VectorIndex(embedder)
    metrics = MetricsStore(cfg.metrics_path, now=lambda: 0.0)
    pipeline = IngestionPipeline(corpus, axes, index, metrics, gateway=build_gateway(cfg))
    report = pipeline.run(now=0.0, force=True)
    print(json.dumps(report.__dict__, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "index.txt").write_text(index.export_text(), encoding="utf-8")
        (out / "metrics.csv").write_text(metrics.export_text(), encoding="utf-8")
        (out / "missing_list.jsonl").write_text(
            pipeline.missing.export_text(), encoding="utf-8"
        )
        (out / "dedup.jsonl").write_text(pipeline.dedup.export_text(), encoding="utf-8")
    return 0


def _axes_from_corpus(corpus: SyntheticCorpus) -> dict:
    platforms, devices, speeds = set(), set(), set()
    for ident in corpus.all_ids():
        kw = corpus.keywords_of(ident)
        if kw.get("platform"):
            platforms.add(kw["platform"])
        if kw.get("device"):
            devices.add(kw["device"])
        if kw.get("speed"):
            speeds.add(kw["speed"])
    if not (platforms and devices and speeds):
        raise CitegateError("corpus documents lack keyword axes; pass --axes")
    return {"platforms": sorted(platforms), "devices": sorted(devices), "speeds": sorted(speeds)}


def _levels(raw: str | None, default: list, cast=None) -> list:
    if raw is None:
        return list(default)
    out = []
    for part in raw.split(","):
        part = part.strip()
        if cast is bool:
            out.append(part.lower() in ("true", "1", "yes"))
        elif cast is not None:
            out.append(cast(part))
        else:
            out.append(part)
    return out


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    questions = load_questions(args.questions)
    factors = {
        "relevance_model": _levels(args.relevance_model, DEFAULT_FACTORS["relevance_model"]),
        "confidence_model": _levels(args.confidence_model, DEFAULT_FACTORS["confidence_model"]),
        "knowledge_model": _levels(args.knowledge_model, DEFAULT_FACTORS["knowledge_model"]),
        "retrieval_k": _levels(args.retrieval_k, DEFAULT_FACTORS["retrieval_k"], int),
        "reasoning_level": _levels(args.reasoning_level, DEFAULT_FACTORS["reasoning_level"]),
        "temperature": _levels(args.temperature, DEFAULT_FACTORS["temperature"], float),
        "allow_online_search": _levels(
            args.allow_online_search, DEFAULT_FACTORS["allow_online_search"], bool
        ),
    }
    manifest = build_manifest(factors, questions, args.seed, args.system_id)
    shared_index = None
    if args.index:
        embedder = HashingEmbedder(cfg.embedder_dim, cfg.embedder_seed)
        shared_index = VectorIndex(embedder)
        shared_index.import_text(Path(args.index).read_text(encoding="utf-8"))
    factory = make_engine_factory(cfg, shared_index)
    records = run_sweep(manifest, questions, factory, workers=args.workers)
    write_csv(records, args.out)
    print(f"wrote {len(records)} rows to {args.out}")
    return 0


def make_engine_factory(cfg: ServiceConfig, shared_index: VectorIndex | None = None):
    """Per-run engines honoring the run's factor levels.

    Scripted backends get a fresh provider, a virtual clock, and sequential
    session ids per run, making the whole sweep CSV byte-deterministic.
    """

    def factory(run_config):
        run_cfg = replace(
            cfg,
            models={
                "relevance": run_config.relevance_model,
                "confidence": run_config.confidence_model,
                "knowledge": run_config.knowledge_model,
            },
            reasoning_level=run_config.reasoning_level,
            temperature=run_config.temperature,
            allow_online_search=run_config.allow_online_search,
            retrieval=replace(cfg.retrieval, top_l=run_config.retrieval_k),
        )
        engine = build_engine(run_cfg, index=shared_index)
        if run_cfg.backend == "scripted":
            engine.gateway.provider = ScriptedProvider(run_cfg.scripts)
            engine.clock = VirtualClock()
            engine.id_factory = SequentialIds()
        return engine

    return factory


def _read_bool(text: str) -> bool:
    return text.strip().lower() in ("true", "1", "yes")


def _cmd_calibrate(args) -> int:
    rows = list(csv.DictReader(open(args.infile, encoding="utf-8")))
    if not rows:
        raise CitegateError(f"{args.infile} has no data rows")
    if args.correct_column not in rows[0]:
        raise CitegateError(
            f"column {args.correct_column!r} not in {args.infile}; judge the runs first"
        )
    records = [
        (float(r["confidence_score"]), _read_bool(r[args.correct_column])) for r in rows
    ]
    mapping = isotonic_calibrate(records)
    calibrated = [(mapping(c), ok) for c, ok in records]
    report = {
        "count": len(records),
        "ece_pre": compute_ece(records, args.bins),
        "ece_post": compute_ece(calibrated, args.bins),
        "aurc_pre": compute_aurc(records),
        "aurc_post": compute_aurc(calibrated),
        "mapping": {
            "thresholds": list(mapping.thresholds),
            "values": list(mapping.values),
        },
    }
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def _cmd_report(args) -> int:
    report: dict = {}
    if args.infile:
        rows = list(csv.DictReader(open(args.infile, encoding="utf-8")))
        records = [
            SimpleNamespace(
                latency_s=float(r["latency_s"]),
                cost_usd=float(r["cost_usd"]),
                token_in=int(r["token_in"]),
                token_out=int(r["token_out"]),
                failed=_read_bool(r["failed"]),
            )
            for r in rows
        ]
        report["efficiency"] = aggregate_efficiency(records)
    if args.metrics:
        store = MetricsStore(args.metrics)
        if args.pareto:
            x, y = [part.strip() for part in args.pareto.split(",")]
            sense = tuple(part.strip() for part in args.sense.split(","))
            report["pareto"] = [
                {
                    "doi": str(row.doi),
                    x: row.metric(x),
                    y: row.metric(y),
                }
                for row in store.pareto_front(x, y, sense)
            ]
        if args.trend:
            report["trend"] = [
                {"year": year, "mean": mean, "count": count}
                for year, mean, count in store.trend(args.trend)
            ]
    if not report:
        raise CitegateError("report needs --in and/or --metrics")
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


def _cmd_serve(args) -> int:
    cfg = _load_config(args)
    if args.sessions_root:
        cfg.sessions_root = args.sessions_root
    elif not cfg.sessions_root:
        cfg.sessions_root = "sessions"
    pipeline = None
    engine = None
    if args.corpus:
        corpus = SyntheticCorpus(args.corpus)
        embedder = HashingEmbedder(cfg.embedder_dim, cfg.embedder_seed)
        index = VectorIndex(embedder)
        metrics = MetricsStore(cfg.metrics_path, now=lambda: 0.0)
        pipeline = IngestionPipeline(
            corpus, _axes_from_corpus(corpus), index, metrics, gateway=build_gateway(cfg)
        )
        pipeline.run(now=0.0, force=True)
        engine = build_engine(cfg, index=index)
    else:
        engine = build_engine(cfg)
    app = App(engine, SessionStore(cfg.sessions_root), pipeline)
    serve_forever(app, args.host, args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
