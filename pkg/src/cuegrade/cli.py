"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import sys
import time
import traceback

from .config import PipelineConfig, load_config
from .corpus import convert_saf_records, write_corpus
from .errors import ValidationError
from .pipeline import (
    run_annotate,
    run_evaluate,
    run_grade,
    run_inspect,
    run_score_vectors,
    run_silver,
    run_spans,
    run_train_head,
)

STAGES = {
    "annotate": run_annotate,
    "silver": run_silver,
    "spans": run_spans,
    "score-vectors": run_score_vectors,
    "train-head": run_train_head,
    "grade": run_grade,
    "evaluate": run_evaluate,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--corpus", help="answer corpus (line-delimited records)")
    parser.add_argument("--rubrics", help="rubric document keyed by question_id")
    parser.add_argument("--workdir", help="artifact directory (default: work, or $CUEGRADE_WORKDIR)")
    parser.add_argument("--embeddings", help="static embedding table or contextual export")
    parser.add_argument("--language", choices=["de", "en"], help="restrict to one corpus language")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuegrade",
        description="Explainable short-answer grading over weakly labeled justification cues.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="tokenize and annotate the corpus")
    _add_common(p)
    p.add_argument("--preannotations", help="optional external annotation layer file")
    p.add_argument("--no-coordination-split", action="store_true", help="disable phrase splits at and/or/und/oder")

    p = sub.add_parser("silver", help="apply labeling functions and aggregate silver labels")
    _add_common(p)
    p.add_argument("--aggregator", help="hmm (default) or a simple method")
    p.add_argument("--hmm-iterations", type=int, help="EM iterations (default 4)")
    p.add_argument("--soft-threshold", type=float, help="default threshold for soft functions")
    p.add_argument("--no-votes", action="store_true", help="skip the vote-matrix audit file")

    p = sub.add_parser("spans", help="extract justification-cue spans and assign rubric items")
    _add_common(p)
    p.add_argument("--span-threshold", type=float, help="probability threshold (default 0.5, strict >)")
    p.add_argument("--external-probs", help="tagger interchange file instead of the silver labels")

    p = sub.add_parser("score-vectors", help="build per-answer scoring vectors")
    _add_common(p)
    p.add_argument("--strategy", choices=["fuzzy", "hard"], help="vector construction strategy")

    p = sub.add_parser("train-head", help="fit the symbolic grading head on the train split")
    _add_common(p)
    p.add_argument("--head", choices=["summation", "decision_tree"])
    p.add_argument("--summation-threshold", type=float)
    p.add_argument("--tree-max-depth", type=int)
    p.add_argument("--tree-unbounded", action="store_true", help="no depth limit")
    p.add_argument("--tree-min-samples-leaf", type=int)

    p = sub.add_parser("grade", help="grade every answer and write explanations")
    _add_common(p)
    p.add_argument("--head", choices=["summation", "decision_tree"])
    p.add_argument("--summation-threshold", type=float)

    p = sub.add_parser("evaluate", help="score the graded answers against gold")
    _add_common(p)
    p.add_argument("--split", choices=["train", "dev", "test", "all"])
    p.add_argument("--format", choices=["machine", "table"], default="machine",
                   help="which report to print to stdout")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub.add_parser("inspect", help="print the highlighted-cue markdown for one answer")
    _add_common(p)
    p.add_argument("answer_id")

    p = sub.add_parser("convert-saf", help="map a public-SAF JSONL export onto the corpus schema")
    p.add_argument("source", help="JSONL export with the public SAF columns")
    p.add_argument("target", help="output corpus path")
    p.add_argument("--quiet", action="store_true")

    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "corpus": getattr(args, "corpus", None),
        "rubrics": getattr(args, "rubrics", None),
        "workdir": getattr(args, "workdir", None),
        "embeddings": getattr(args, "embeddings", None),
        "language": getattr(args, "language", None),
        "preannotations": getattr(args, "preannotations", None),
        "aggregator": getattr(args, "aggregator", None),
        "hmm_iterations": getattr(args, "hmm_iterations", None),
        "default_soft_threshold": getattr(args, "soft_threshold", None),
        "span_threshold": getattr(args, "span_threshold", None),
        "external_probs": getattr(args, "external_probs", None),
        "scoring_strategy": getattr(args, "strategy", None),
        "head": getattr(args, "head", None),
        "summation_threshold": getattr(args, "summation_threshold", None),
        "tree_max_depth": getattr(args, "tree_max_depth", None),
        "tree_min_samples_leaf": getattr(args, "tree_min_samples_leaf", None),
        "eval_split": getattr(args, "split", None),
    }
    if getattr(args, "no_coordination_split", False):
        overrides["split_coordination"] = False
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    if getattr(args, "tree_unbounded", False):
        overrides["tree_max_depth"] = None
    return load_config(getattr(args, "config", None), overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        if args.command == "convert-saf":
            records = convert_saf_records(args.source)
            write_corpus(records, args.target)
            if not args.quiet:
                print(f"convert-saf: {len(records)} answers -> {args.target}")
            return 0

        cfg = _config_from_args(args)
        if args.command == "inspect":
            print(run_inspect(cfg, args.answer_id))
            return 0
        if args.command == "silver":
            summary = run_silver(cfg, audit_votes=not args.no_votes)
        else:
            summary = STAGES[args.command](cfg)
        if args.command == "evaluate" and args.format == "table":
            print(cfg.workpath("report.txt").read_text("utf-8"))
        if not args.quiet:
            elapsed = time.perf_counter() - started
            details = ", ".join(
                f"{k}={v}" for k, v in summary.items() if k not in ("stage", "outputs")
            )
            outputs = " ".join(summary.get("outputs", []))
            print(f"{summary['stage']}: {details} ({elapsed:.2f}s) -> {outputs}")
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
