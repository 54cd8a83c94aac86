"""``logidroid`` command line: build-db, query, fuse, generate, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import LogiDroidError, PipelineError
from .evaluation import collect_cases, evaluate_corpus, load_annotations, pair_up
from .fusion import fuse
from .llm import LLMSession, TranscriptLog, provider_from_spec
from .pipeline import FUSION_SESSION, RunConfig, retrieve_for, run_pipeline
from .store import KnowledgeStore, build_store, embedder_from_spec

logger = logging.getLogger("logidroid")

EXIT_OK, EXIT_ABORTED = 0, 1


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, ensure_ascii=False))


def cmd_build_db(args: argparse.Namespace) -> int:
    session = None
    if args.llm:
        log = TranscriptLog(Path(args.out) / "transcript.jsonl")
        session = LLMSession(provider_from_spec(args.llm), log, "summaries")
    store = build_store(args.cases, args.out, embedder_from_spec(args.embedder), session)
    _print_json({"entries": len(store), "categories": store.category_counts()})
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    embedder = embedder_from_spec(args.embedder) if args.embedder else None
    store = KnowledgeStore.load(args.db, embedder)
    results = store.retrieve(args.requirement, args.category, args.exclude_app, args.top)
    _print_json(
        [
            {"app_id": r.entry.app_id, "category": r.entry.category, "summary": r.entry.summary, "score": r.score}
            for r in results
        ]
    )
    return EXIT_OK


def _config(args: argparse.Namespace, **extra) -> RunConfig:
    return RunConfig(
        requirement=args.requirement,
        category=args.category,
        store_dir=args.db,
        exclude_app=args.exclude_app,
        top_sim=args.top,
        embedder_spec=args.embedder,
        no_retrieval=args.no_retrieval,
        llm_spec=args.llm,
        **extra,
    )


def cmd_fuse(args: argparse.Namespace) -> int:
    config = _config(args)
    retrieved = [] if config.no_retrieval else retrieve_for(config)
    transcript = Path(args.transcript) if args.transcript else None
    session = LLMSession(provider_from_spec(args.llm), TranscriptLog(transcript), FUSION_SESSION)
    logic = fuse(config.requirement, [r.entry.case for r in retrieved], config.category, session)
    out = logic.to_dict()
    Path(args.out).write_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    _print_json({"steps": len(logic.steps), "retrieved_apps": [r.entry.app_id for r in retrieved]})
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    if args.app_model:
        backend_spec = f"sim:{args.app_model}"
    else:
        backend_spec = args.device
    run_dir = args.run_dir or str(Path(args.out).with_suffix("")) + ".run"
    config = _config(
        args,
        step_num=args.step_num,
        attempt_limit=args.attempt_limit,
        backend_spec=backend_spec,
        run_dir=run_dir,
        call_budget_multiplier=args.budget_multiplier,
        app_id=args.app_id,
    )
    try:
        result = run_pipeline(config)
    except PipelineError as exc:
        print(f"aborted during {exc.phase}: {exc.cause}", file=sys.stderr)
        return EXIT_ABORTED
    Path(args.out).write_text(json.dumps(result.case.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    _print_json(
        {
            "status": result.status.value,
            "steps": len(result.case.steps),
            "outcomes": result.report.to_dict()["outcomes"],
            "run_dir": str(result.run_dir),
        }
    )
    return result.exit_code


def cmd_eval(args: argparse.Namespace) -> int:
    pairs = pair_up(collect_cases(args.generated), collect_cases(args.ground_truth), load_annotations(args.annotations))
    report = evaluate_corpus(pairs).to_dict()
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _print_json({k: report[k] for k in ("total", "perfect_rate", "essential_rate", "essential_rate_kind")})
    return EXIT_OK


def _retrieval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--db", required=False, help="knowledge store directory")
    p.add_argument("--category", required=True)
    p.add_argument("--requirement", required=True)
    p.add_argument("--top", type=int, default=3, help="number of similar cases to retrieve")
    p.add_argument("--exclude-app", default=None)
    p.add_argument("--embedder", default=None, help="deterministic | http:<url> (default: as recorded in the store)")
    p.add_argument("--no-retrieval", action="store_true", help="fuse from the requirement alone")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logidroid", description="Generate functional GUI test cases.")
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument("--run-dir", dest="global_run_dir", default=None, help="run directory (generate)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="ingest test cases into a knowledge store")
    p.add_argument("--cases", required=True, help="directory of case JSON files")
    p.add_argument("--out", required=True, help="store directory")
    p.add_argument("--embedder", default="deterministic")
    p.add_argument("--llm", default=None, help="provider for cases without a precomputed summary")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("query", help="retrieve similar test cases")
    p.add_argument("--db", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--requirement", required=True)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--exclude-app", default=None)
    p.add_argument("--embedder", default=None)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("fuse", help="fuse retrieved cases into business logic")
    _retrieval_flags(p)
    p.add_argument("--llm", required=True, help="scripted:<file> | http:<url>")
    p.add_argument("--out", required=True)
    p.add_argument("--transcript", default=None, help="write the model transcript here")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("generate", help="run the whole pipeline against an app")
    _retrieval_flags(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--app-model", help="simulated app JSON")
    target.add_argument("--device", help="adb:<serial>")
    p.add_argument("--llm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--step-num", type=int, default=2)
    p.add_argument("--attempt-limit", type=int, default=3)
    p.add_argument("--budget-multiplier", type=int, default=10)
    p.add_argument("--app-id", default=None, help="app id recorded in the generated case")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generated cases against ground truth")
    p.add_argument("--generated", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--annotations", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "run_dir", "absent") is None and args.global_run_dir:
        args.run_dir = args.global_run_dir
    if args.command in ("fuse", "generate") and not args.db and not args.no_retrieval:
        parser.error("--db is required unless --no-retrieval is given")
    try:
        return args.func(args)
    except (LogiDroidError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
