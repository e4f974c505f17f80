"""Command-line surface wrapping every pipeline stage.

Exit codes: 0 success, 1 domain error, 2 usage error. ``--format records``
switches machine-readable line-delimited output on where it applies.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import (
    BenchConfig,
    DebatePlanConfig,
    TravelPlanConfig,
    generate_instance,
    load_instance,
    save_instance,
)
from .builder import IngestionConfig, SeedingError, ingest_trajectory
from .evalharness import (
    EvalConfig,
    build_err_alignment,
    explicit_mention_fraction,
    macro_overlap,
    overlap_diagnostics,
    run_eval,
    strip_timings,
)
from .gateway import GatewayConfig, GatewayError, build_gateway
from .model import dumps_record, read_records
from .retrieval import RetrievalConfig, answer_query
from .store import StoreError, load_view
from .textutil import count_tokens

logger = logging.getLogger(__name__)


def _gateway_from_args(args) -> object:
    if getattr(args, "gateway_config", None):
        return build_gateway(GatewayConfig.from_file(args.gateway_config))
    return build_gateway()


def _ingestion_from_args(args) -> IngestionConfig:
    return IngestionConfig(
        n_start=args.n_start,
        k_update=args.k_update,
        k_event=args.k_event,
        history_window=args.history_window,
        rewrite_mode=args.rewrite_mode,
    )


def _cmd_ingest(args) -> int:
    steps = read_records(args.input)
    gateway = _gateway_from_args(args)
    snippets = ingest_trajectory(
        args.store,
        steps,
        trajectory_id=args.trajectory_id,
        gateway=gateway,
        config=_ingestion_from_args(args),
    )
    if args.format == "records":
        print(dumps_record({"kind": "ingest_result", "snippets": len(snippets), "store": str(args.store)}))
    else:
        print(f"ingested {len(snippets)} steps into {args.store}")
    return 0


def _cmd_query(args) -> int:
    view = load_view(args.store)
    gateway = _gateway_from_args(args)
    config = RetrievalConfig(k_retrieve=args.k_retrieve)
    response = answer_query(
        args.q,
        view,
        budget=args.budget,
        gateway=gateway,
        config=config,
        context_only=args.context_only,
    )
    if args.format == "records":
        print(dumps_record(response.to_record()))
    else:
        print(f"filter: scopes={sorted(response.filter_config.scopes)} "
              f"events={sorted(response.filter_config.event_types)} "
              f"entities={sorted(response.filter_config.entity_types)}")
        print("top ranked:", [(r.snippet_ref, r.density, round(r.similarity, 3)) for r in response.ranked[:10]])
        if response.answer is not None:
            print("answer:", response.answer)
        print(response.context)
    return 0


def _cmd_gen_bench(args) -> int:
    plan = None
    if args.domain == "travel" and args.days:
        plan = TravelPlanConfig(days=args.days)
    elif args.domain == "debate" and args.threads:
        plan = DebatePlanConfig(threads=(args.threads, args.threads))
    config = BenchConfig(
        domain=args.domain,
        scale=args.scale,
        seed=args.seed,
        remodel_rate=args.remodel_rate,
        max_sentences_per_turn=args.max_sentences,
        plan_config=plan,
    )
    instance = generate_instance(config)
    save_instance(instance, args.out)
    if args.format == "records":
        print(dumps_record({
            "kind": "gen_result",
            "out": str(args.out),
            "steps": len(instance.steps),
            "questions": len(instance.questions),
            "ops": len(instance.storyboard.ops),
        }))
    else:
        print(f"wrote {len(instance.steps)} steps, {len(instance.questions)} questions to {args.out}")
    return 0


def _eval_config_from_args(args) -> EvalConfig:
    return EvalConfig(
        rewrite=args.rewrite,
        ablation=args.ablation,
        context_only=args.context_only,
        budget=args.budget,
        retrieval=RetrievalConfig(k_retrieve=args.k_retrieve),
        force_reingest=args.force_reingest,
    )


def _cmd_eval(args) -> int:
    instance = load_instance(args.bench)
    gateway = _gateway_from_args(args)
    report = run_eval(instance, args.store, gateway, _eval_config_from_args(args))
    if args.out:
        Path(args.out).write_text(
            json.dumps(strip_timings(report), indent=2, sort_keys=True) + "\n", "utf-8"
        )
    if args.per_question:
        with open(args.per_question, "w", encoding="utf-8") as handle:
            for record in report["per_question"]:
                handle.write(dumps_record(record) + "\n")
    aggregate = report.get("aggregate")
    if args.format == "records":
        slim = strip_timings(report)
        slim.pop("per_question", None)
        print(dumps_record(slim))
    elif aggregate:
        print(f"macro P={aggregate['macro_precision']:.3f} R={aggregate['macro_recall']:.3f} "
              f"F1={aggregate['macro_f1']:.3f} ERR={aggregate['err']:.3f} "
              f"hit-rate={aggregate['gold_turn_hit_rate']:.3f}")
        print("overlap:", {k: round(v, 3) for k, v in aggregate["overlap"].items()})
    else:
        print("warning: no questions in the benchmark instance; nothing to aggregate", file=sys.stderr)
    return 0


def _cmd_audit_err(args) -> int:
    instance = load_instance(args.bench)
    gateway = _gateway_from_args(args)
    config = _eval_config_from_args(args)
    report = run_eval(instance, args.store, gateway, config)
    alignment, name_map = build_err_alignment(instance)
    explicit = explicit_mention_fraction(alignment, [s.action_text for s in instance.steps], name_map)
    err = report["aggregate"]["err"] if "aggregate" in report else float("nan")
    if args.format == "records":
        print(dumps_record({
            "kind": "err_audit",
            "rewrite": args.rewrite,
            "err": err,
            "explicit_mention_fraction": explicit,
            "mentions": len(alignment),
        }))
    else:
        print(f"ERR ({args.rewrite} rewriting): {err:.4f} over {len(alignment)} mentions")
        print(f"explicit-mention fraction of the raw trajectory: {explicit:.4f}")
    return 0


def _cmd_diagnose(args) -> int:
    gateway = _gateway_from_args(args)
    reports = []
    for bench_dir in args.bench:
        instance = load_instance(bench_dir)
        store = Path(args.store_root) / Path(bench_dir).name
        report = run_eval(instance, store, gateway, _eval_config_from_args(args))
        if "aggregate" not in report:
            continue
        from .evalharness import OverlapReport

        overlap = OverlapReport(**report["aggregate"]["overlap"])
        reports.append(overlap)
        if args.format != "records":
            print(f"{bench_dir}: " + " ".join(f"{k}={v:.3f}" for k, v in overlap.to_dict().items()))
    if not reports:
        print("no diagnosable instances", file=sys.stderr)
        return 1
    macro = macro_overlap(reports)
    if args.format == "records":
        print(dumps_record({"kind": "overlap_report", "instances": len(reports), **macro.to_dict()}))
    else:
        print("macro: " + " ".join(f"{k}={v:.3f}" for k, v in macro.to_dict().items()))
    return 0


def _cmd_stats(args) -> int:
    rows = []
    for bench_dir in args.bench:
        instance = load_instance(bench_dir)
        tokens = sum(count_tokens(s.action_text) for s in instance.steps)
        rows.append((Path(bench_dir).name, tokens, 1, len(instance.questions)))
    if args.format == "records":
        for name, tokens, trajs, questions in rows:
            print(dumps_record({
                "kind": "bench_stats",
                "subset": name,
                "context_tokens": tokens,
                "trajectories": trajs,
                "questions": questions,
            }))
    else:
        print(f"{'subset':<24} {'context tok.':>12} {'trajs.':>7} {'ques.':>6}")
        for name, tokens, trajs, questions in rows:
            print(f"{name:<24} {tokens:>12} {trajs:>7} {questions:>6}")
        if len(rows) > 1:
            total_tokens = sum(r[1] for r in rows)
            print(f"{'all':<24} {total_tokens // len(rows):>12} {sum(r[2] for r in rows):>7} "
                  f"{sum(r[3] for r in rows):>6}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        store_root=args.store_root,
        gateway_config_path=args.gateway_config,
        default_budget=args.budget,
        default_k_retrieve=args.k_retrieve,
        auth_token=args.auth_token,
    )
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _add_common_gateway(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gateway-config", help="JSON gateway config (provider, endpoint, ...)")
    parser.add_argument("--format", choices=["text", "records"], default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentmem", description="Intent-indexed agentic memory engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a trajectory file into a store")
    p.add_argument("--store", required=True)
    p.add_argument("--input", required=True, help="line-delimited trajectory_step records")
    p.add_argument("--trajectory-id")
    p.add_argument("--n-start", type=int, default=50)
    p.add_argument("--k-update", type=int, default=50)
    p.add_argument("--k-event", type=int, default=5)
    p.add_argument("--history-window", type=int, default=20)
    p.add_argument("--rewrite-mode", choices=["detector", "always", "off"], default="detector")
    _add_common_gateway(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("query", help="query an ingested store")
    p.add_argument("--store", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--budget", type=int, default=4096)
    p.add_argument("--k-retrieve", type=int, default=40)
    p.add_argument("--context-only", action="store_true")
    _add_common_gateway(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("gen-bench", help="generate a benchmark instance")
    p.add_argument("--domain", choices=["travel", "debate"], required=True)
    p.add_argument("--scale", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--remodel-rate", type=float, default=0.5)
    p.add_argument("--max-sentences", type=int, default=2)
    p.add_argument("--days", type=int, default=0, help="travel: itinerary days")
    p.add_argument("--threads", type=int, default=0, help="debate: argument threads")
    _add_common_gateway(p)
    p.set_defaults(func=_cmd_gen_bench)

    for name, func in (("eval", _cmd_eval), ("audit-err", _cmd_audit_err)):
        p = sub.add_parser(name, help=f"run {name} over a generated instance")
        p.add_argument("--bench", required=True)
        p.add_argument("--store", required=True)
        p.add_argument("--rewrite", choices=["pipeline", "oracle", "disabled"], default="pipeline")
        p.add_argument("--ablation", choices=["none", "no-scope", "no-event", "no-entity"], default="none")
        p.add_argument("--context-only", action="store_true")
        p.add_argument("--budget", type=int, default=4096)
        p.add_argument("--k-retrieve", type=int, default=40)
        p.add_argument("--force-reingest", action="store_true")
        if name == "eval":
            p.add_argument("--out", help="write the aggregate report JSON here")
            p.add_argument("--per-question", help="write per-question records here")
        _add_common_gateway(p)
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose", help="overlap diagnostics across instances")
    p.add_argument("--bench", nargs="+", required=True)
    p.add_argument("--store-root", required=True)
    p.add_argument("--rewrite", choices=["pipeline", "oracle", "disabled"], default="pipeline")
    p.add_argument("--ablation", choices=["none", "no-scope", "no-event", "no-entity"], default="none")
    p.add_argument("--context-only", action="store_true", default=True)
    p.add_argument("--budget", type=int, default=4096)
    p.add_argument("--k-retrieve", type=int, default=40)
    p.add_argument("--force-reingest", action="store_true")
    _add_common_gateway(p)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("stats", help="benchmark statistics (context tokens, trajectories, questions)")
    p.add_argument("--bench", nargs="+", required=True)
    _add_common_gateway(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("serve", help="run the ingest/query HTTP service")
    p.add_argument("--store-root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--budget", type=int, default=4096)
    p.add_argument("--k-retrieve", type=int, default=40)
    p.add_argument("--auth-token")
    p.add_argument("--gateway-config")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StoreError, GatewayError, SeedingError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
