"""Command-line surface of the knowledge base."""
from __future__ import annotations

import argparse
from dataclasses import replace
import json
import logging
import sys
from typing import Any, Optional, Sequence

from .api import KnowledgeBase, _err, parse_query, run_simulation
from .config import (
    ContextConfig,
    LoopConfig,
    MiningConfig,
    RecommendConfig,
    SimEnvConfig,
    load_config_file,
)
from .const import DEFAULT_TOP_K, EXPORT_KINDS, RANKINGS, STARTUP_MESSAGE
from .exceptions import CognicoreError

_LOGGER = logging.getLogger(__name__)

EPILOG = """
Examples:
  # Validate a schema
  python -m cognicore --schema cognicore/schemas/cbt.json schema

  # Load precedents and mine laws for the diagnosis
  python -m cognicore --schema cognicore/schemas/cbt.json --store-dir kb ingest cognicore/schemas/cbt_precedents.csv session
  python -m cognicore --schema cognicore/schemas/cbt.json --store-dir kb mine diagnosis

  # Rank diagnoses for a partial session, with explanations
  python -m cognicore --schema cognicore/schemas/cbt.json --store-dir kb predict diagnosis emotion=anxiety social_situation=work cognitive_distortion=catastrophizing --explain

  # Recommend with a confidence threshold
  python -m cognicore --schema cognicore/schemas/cbt.json --store-dir kb --threshold 0.7 recommend diagnosis emotion=anxiety social_situation=work cognitive_distortion=catastrophizing

  # Cluster objects into invariants and describe one
  python -m cognicore --schema cognicore/schemas/crm.json --store-dir kb cluster
  python -m cognicore --schema cognicore/schemas/crm.json --store-dir kb describe inv-001

  # Closed-loop simulations
  python -m cognicore --seed 42 simulate-crm --metrics crm_metrics.csv
  python -m cognicore --seed 7 simulate-pm --metrics pm_metrics.csv --steps 1000
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cognicore",
        description="Cognicore knowledge base and decision support",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--schema", help="Schema JSON file")
    parser.add_argument("--store-dir", default="store", help="Store directory (default: store)")
    parser.add_argument("--config", help="JSON config with mining/context/recommend/env/loop sections")
    parser.add_argument("--seed", type=int, help="Random seed for simulations")
    parser.add_argument("--alpha", type=float, help="Significance level")
    parser.add_argument("--threshold", type=float, help="Confidence threshold for automatic decisions")
    parser.add_argument("--ranking", choices=RANKINGS, help="Rule ranking")
    parser.add_argument("--jobs", type=int, help="Parallel mining workers")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    subparsers = parser.add_subparsers(dest="mode", help="Operation mode")

    subparsers.add_parser("schema", help="Validate the schema")

    ingest_parser = subparsers.add_parser("ingest", help="Load a CSV of records")
    ingest_parser.add_argument("csv", help="CSV file")
    ingest_parser.add_argument("type_id", help="Object type of every row")
    ingest_parser.add_argument("--id-prefix", help="Prefix for generated record ids")

    mine_parser = subparsers.add_parser("mine", help="Mine laws for one target classifier")
    mine_parser.add_argument("target", help="Target classifier")
    mine_parser.add_argument("--classifiers", nargs="+", help="Premise classifiers (default: all)")

    refresh_parser = subparsers.add_parser("refresh", help="Re-mine and revise the rule base")
    refresh_parser.add_argument("--targets", nargs="+", help="Target classifiers (default: all)")

    predict_parser = subparsers.add_parser("predict", help="Rank categories of a target")
    predict_parser.add_argument("target", help="Target classifier")
    predict_parser.add_argument("query", nargs="*", help="classifier=code assignments")
    predict_parser.add_argument("--use-invariants", action="store_true", help="Extend the query from its nearest invariant")
    predict_parser.add_argument("--explain", action="store_true", help="Add IF/THEN lines")

    cluster_parser = subparsers.add_parser("cluster", help="Group objects into invariants")
    cluster_parser.add_argument("--classifiers", nargs="+", help="Context classifiers (default: all)")
    cluster_parser.add_argument("--merge-hamming", type=int, help="Fold closures this close together")

    describe_parser = subparsers.add_parser("describe", help="Report one invariant")
    describe_parser.add_argument("invariant_id", help="Invariant id")
    describe_parser.add_argument("--top-k", type=int, default=DEFAULT_TOP_K, help="Literals to list")

    recommend_parser = subparsers.add_parser("recommend", help="Recommend a category of a target")
    recommend_parser.add_argument("target", help="Target classifier")
    recommend_parser.add_argument("query", nargs="*", help="classifier=code assignments")
    recommend_parser.add_argument("--user", help="Use this user's confidence threshold")

    hyp_parser = subparsers.add_parser("hypothesize", help="Derive hypotheses from live rules")
    hyp_parser.add_argument("--symmetric", action="store_true", help="Induce in both directions")
    hyp_parser.add_argument("--revise", action="store_true", help="Check hypotheses against the store")

    expect_parser = subparsers.add_parser("expect", help="Open an expectation for an action")
    expect_parser.add_argument("action_id", help="Action record id")
    expect_parser.add_argument("target", help="Classifier whose outcome is expected")
    expect_parser.add_argument("--deadline", type=float, required=True, help="Latest time of the outcome")
    expect_parser.add_argument("--expected", help="Expected literal (default: top prediction)")

    feedback_parser = subparsers.add_parser("feedback", help="Match an outcome to an expectation")
    feedback_parser.add_argument("expectation_id", help="Expectation id")
    feedback_parser.add_argument("--observed", help="Observed record id")
    feedback_parser.add_argument("--now", type=float, help="Current time, expires overdue expectations")

    scan_parser = subparsers.add_parser("scan", help="Score success functions and reinforce")
    scan_parser.add_argument("--since", type=int, default=0, help="Only pairs closed after this revision")
    scan_parser.add_argument("--now", type=float, help="Also expire expectations due by this time")

    evaluate_parser = subparsers.add_parser("evaluate", help="Success report for one process")
    evaluate_parser.add_argument("function", help="Success function name")
    evaluate_parser.add_argument("process_id", help="Process record id")

    for name, environment in (("simulate-crm", "CRM offers"), ("simulate-pm", "PM assignments")):
        sim_parser = subparsers.add_parser(name, help=f"Closed-loop simulation of {environment}")
        sim_parser.add_argument("--metrics", default=f"{name.split('-')[1]}_metrics.csv", help="Metrics CSV path")
        sim_parser.add_argument("--steps", type=int, help="Episode length")
        sim_parser.add_argument("--save-store", help="Also save the final store here")

    export_parser = subparsers.add_parser("export", help="Write one kind as JSON Lines")
    export_parser.add_argument("kind", choices=sorted(EXPORT_KINDS), help="What to export")
    export_parser.add_argument("path", help="Output file")

    import_parser = subparsers.add_parser("import", help="Merge a JSON Lines file")
    import_parser.add_argument("path", help="Input file")
    import_parser.add_argument("--kind", choices=sorted(EXPORT_KINDS), help="What the file holds")

    subparsers.add_parser("replay", help="Rebuild the rule base from its ledgers and compare")
    return parser


def _mining(args: argparse.Namespace, sections: dict) -> MiningConfig:
    return MiningConfig.from_dict(sections.get("mining")).with_overrides(
        alpha=args.alpha, ranking=args.ranking
    )


def _recommend(args: argparse.Namespace, sections: dict) -> RecommendConfig:
    raw = dict(sections.get("recommend") or {})
    if args.threshold is not None:
        raw["confidence_threshold"] = args.threshold
    return RecommendConfig.from_dict(raw)


def _jobs(args: argparse.Namespace) -> int:
    if args.jobs is not None and args.jobs < 1:
        raise CognicoreError("--jobs must be at least 1", ident="jobs")
    return args.jobs or 1


def _simulate(args: argparse.Namespace, sections: dict) -> dict:
    environment = args.mode.split("-")[1]
    raw_env = dict(sections.get("env") or {})
    if environment == "pm":
        for key, value in (("n_segments", 3), ("n_products", 3), ("n_clients", 5), ("episode_length", 1000)):
            raw_env.setdefault(key, value)
    if args.seed is not None:
        raw_env["seed"] = args.seed
    if args.steps is not None:
        raw_env["episode_length"] = args.steps
    env = SimEnvConfig.from_dict(raw_env)

    raw_loop = dict(sections.get("loop") or {})
    if args.jobs is not None:
        raw_loop["jobs"] = _jobs(args)
    loop = LoopConfig.from_dict(raw_loop)
    mining = loop.mining.with_overrides(alpha=args.alpha, ranking=args.ranking)
    recommend = loop.recommend
    if args.threshold is not None:
        recommend = RecommendConfig.from_dict(
            {
                "confidence_threshold": args.threshold,
                "auto_decide": recommend.auto_decide,
                "top_k": recommend.top_k,
                "user_thresholds": dict(recommend.user_thresholds),
                "tie_margin": recommend.tie_margin,
            }
        )
    loop = LoopConfig.from_dict(raw_loop, mining=mining, recommend=recommend)
    return run_simulation(environment, env, loop, args.metrics, args.save_store)


def dispatch(args: argparse.Namespace) -> Any:
    """Run one command; returns a result dict or report text."""
    sections = load_config_file(args.config)
    if args.mode in ("simulate-crm", "simulate-pm"):
        return _simulate(args, sections)
    if not args.schema:
        raise CognicoreError("--schema is required for this command", ident="schema")

    mining = _mining(args, sections)
    kb = KnowledgeBase(args.schema, args.store_dir, mining, _jobs(args))
    mode = args.mode
    if mode == "schema":
        return kb.check_schema()
    if mode == "ingest":
        return kb.ingest(args.csv, args.type_id, args.id_prefix)
    if mode == "mine":
        return kb.mine(args.target, args.classifiers)
    if mode == "refresh":
        return kb.refresh(args.targets)
    if mode == "predict":
        return kb.predict(
            parse_query(args.query), args.target, args.use_invariants, args.explain
        )
    if mode == "cluster":
        raw = dict(sections.get("context") or {})
        if args.classifiers:
            raw["classifiers"] = args.classifiers
        if args.merge_hamming is not None:
            raw["merge_hamming"] = args.merge_hamming
        context = ContextConfig.from_dict(raw)
        overrides = context.mining.with_overrides(alpha=args.alpha, ranking=args.ranking)
        return kb.cluster(replace(context, mining=overrides))
    if mode == "describe":
        return kb.describe(args.invariant_id, args.top_k)
    if mode == "recommend":
        return kb.recommend(
            parse_query(args.query), args.target, _recommend(args, sections), args.user
        )
    if mode == "hypothesize":
        return kb.hypothesize(args.symmetric, args.revise)
    if mode == "expect":
        return kb.expect(args.action_id, args.target, args.deadline, args.expected)
    if mode == "feedback":
        return kb.feedback(args.expectation_id, args.observed, args.now)
    if mode == "scan":
        return kb.scan(args.since, args.now)
    if mode == "evaluate":
        return kb.evaluate(args.function, args.process_id)
    if mode == "export":
        return kb.export(args.kind, args.path)
    if mode == "import":
        return kb.import_file(args.path, args.kind)
    if mode == "replay":
        return kb.replay()
    raise CognicoreError(f"Unknown command {mode!r}", ident=mode)


def _emit(result: Any, stream) -> None:
    if isinstance(result, str):
        stream.write(result)
    else:
        stream.write(json.dumps(result, sort_keys=True, ensure_ascii=False) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _LOGGER.debug(STARTUP_MESSAGE)

    if not args.mode:
        parser.print_help()
        return 1
    try:
        result = dispatch(args)
    except CognicoreError as exc:
        _emit(_err(str(exc), ident=_plain(exc.ident)), sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        _LOGGER.exception("Command %s failed", args.mode)
        _emit(_err(f"Internal error: {exc}"), sys.stderr)
        return 2
    _emit(result, sys.stdout)
    return 0 if not isinstance(result, dict) or result.get("status") == "success" else 1


def _plain(value: Any) -> Any:
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return str(value)


__all__ = ["build_parser", "dispatch", "main"]
