"""Command-line entry point for the tagger's three jobs."""

from __future__ import annotations

import argparse
import sys

from .io import DataError
from .model import BUILTIN_MODEL
from .train import export_embeddings, train_span_predictor, train_token_classifier


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuetagger",
        description="Neural justification-cue tagger over weakly supervised silver labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-token", help="token classifier on soft silver labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--silver", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--context", action="store_true", help="prefix the reference answer as context")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--model-name", default=BUILTIN_MODEL)
    p.add_argument("--hard-labels", action="store_true", help="binarize silver labels (ablation)")
    p.add_argument("--export-splits", default="dev,test", help="comma-separated splits to export")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-span", help="QA-style span predictor against rubric items")
    p.add_argument("--corpus", required=True)
    p.add_argument("--silver", required=True)
    p.add_argument("--rubrics", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--model-name", default=BUILTIN_MODEL)
    p.add_argument("--export-splits", default="dev,test", help="comma-separated splits to export")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export-embeddings", help="contextual token vectors for the grading pipeline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--rubrics")
    p.add_argument("--workdir", required=True)
    p.add_argument("--model-name", default=BUILTIN_MODEL)
    p.add_argument("--checkpoint", help="reuse a trained token-classifier encoder")
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train-token":
            summary = train_token_classifier(
                args.corpus,
                args.silver,
                args.workdir,
                context=args.context,
                epochs=args.epochs,
                model_name=args.model_name,
                hard_labels=args.hard_labels,
                seed=args.seed,
                export_splits=tuple(args.export_splits.split(",")),
            )
        elif args.command == "train-span":
            summary = train_span_predictor(
                args.corpus,
                args.silver,
                args.rubrics,
                args.workdir,
                epochs=args.epochs,
                model_name=args.model_name,
                seed=args.seed,
                export_splits=tuple(args.export_splits.split(",")),
            )
        else:
            summary = export_embeddings(
                args.corpus,
                args.workdir,
                rubrics_path=args.rubrics,
                model_name=args.model_name,
                checkpoint=args.checkpoint,
                seed=args.seed,
            )
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    details = ", ".join(f"{k}={v}" for k, v in summary.items() if k not in ("task", "export", "checkpoint"))
    print(f"{summary['task']}: {details} -> {summary['export']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
