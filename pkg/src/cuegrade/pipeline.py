"""Stage runners behind the CLI: each stage reads its declared artifacts from
the workdir, writes its outputs atomically, and returns a summary dict."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from . import artifacts
from .annotate import AnnotatedToken, Candidate, annotate, load_preannotations
from .artifacts import (
    FORMAT_VERSION,
    check_version,
    iter_jsonl,
    read_document,
    require_artifact,
    write_document,
    write_jsonl,
)
from .config import PipelineConfig
from .corpus import (
    AnswerRecord,
    Rubric,
    load_corpus,
    load_explanations,
    load_rubrics,
    render_explanation_markdown,
    write_explanations,
)
from .errors import MissingArtifactError, ValidationError
from .evaluation import (
    class_grouped_task_metrics,
    nine_class_report,
    pearson,
    rmse,
    token_macro_prf,
)
from .grading import (
    DecisionTreeModel,
    ScoringVector,
    SummationParams,
    explain,
    scoring_vector_fuzzy,
    scoring_vector_hard,
    summation_awarded,
    summation_grade,
    tree_decision_path,
    tree_fit,
)
from .hmm import hmm_fit, hmm_posterior
from .labeling import (
    AnnotatedAnswer,
    AnnotatedRubric,
    SilverLabels,
    VoteMatrix,
    aggregate_simple,
    annotate_answer,
    apply_labeling_functions,
    rubric_record_key,
)
from .similarity import EmbeddingTable
from .spans import (
    JustificationSpan,
    TaggerOutput,
    assign_span_to_rubric,
    count_duplicate_spans,
    extract_spans,
    load_external_probs,
    merge_tagger_outputs,
    task_metrics,
)

import numpy as np

ANNOTATIONS_FILE = "annotations.jsonl"
VOTES_FILE = "votes.jsonl"
HMM_FILE = "hmm_params.json"
SILVER_FILE = "silver.jsonl"
SPANS_FILE = "spans.jsonl"
VECTORS_FILE = "vectors.jsonl"
MODEL_FILE = "model.json"
EXPLANATIONS_FILE = "explanations.jsonl"
REPORT_JSON = "report.json"
REPORT_TABLE = "report.txt"
FIGURES_DIR = "figures"


# ---------------------------------------------------------------------------
# shared loading helpers


def _load_filtered_corpus(cfg: PipelineConfig) -> list[AnswerRecord]:
    if not cfg.corpus:
        raise ValidationError("config: corpus path is not set")
    records = load_corpus(require_artifact(cfg.corpus))
    if cfg.language:
        records = [r for r in records if r.language == cfg.language]
    if not records:
        raise ValidationError("corpus is empty after filtering")
    return records


def _load_rubrics(cfg: PipelineConfig) -> dict[str, Rubric]:
    if not cfg.rubrics:
        raise ValidationError("config: rubrics path is not set")
    return load_rubrics(require_artifact(cfg.rubrics))


def _rubric_for(rubrics: Mapping[str, Rubric], question_id: str) -> Rubric:
    if question_id not in rubrics:
        raise ValidationError(f"no rubric for question {question_id!r}")
    return rubrics[question_id]


def _annotation_record(answer: AnnotatedAnswer) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "answer_id": answer.record.answer_id,
        "tokens": [
            [t.text, t.lemma, t.stem, t.pos, t.dep, t.shape, t.is_stopword, t.char_start, t.char_end]
            for t in answer.tokens
        ],
        "sentences": [[c.start, c.end] for c in answer.sentences],
        "candidates": [[c.kind, c.start, c.end] for c in answer.candidates],
    }


def load_annotations(path, corpus_by_id: Mapping[str, AnswerRecord]) -> dict[str, AnnotatedAnswer]:
    out: dict[str, AnnotatedAnswer] = {}
    for lineno, rec in iter_jsonl(path):
        where = f"{path}:{lineno}"
        check_version(rec, where)
        answer_id = rec.get("answer_id")
        if answer_id not in corpus_by_id:
            continue  # annotations may cover a larger corpus than the current filter
        tokens = [
            AnnotatedToken(
                text=t[0], lemma=t[1], stem=t[2], pos=t[3], dep=t[4],
                shape=t[5], is_stopword=bool(t[6]), char_start=int(t[7]), char_end=int(t[8]),
            )
            for t in rec["tokens"]
        ]
        sentences = [Candidate(kind="sentence", start=int(s), end=int(e)) for s, e in rec["sentences"]]
        candidates = [Candidate(kind=k, start=int(s), end=int(e)) for k, s, e in rec["candidates"]]
        out[answer_id] = AnnotatedAnswer(
            record=corpus_by_id[answer_id], tokens=tokens, sentences=sentences, candidates=candidates
        )
    return out


def _require_annotations(cfg: PipelineConfig, corpus_by_id) -> dict[str, AnnotatedAnswer]:
    path = require_artifact(cfg.workpath(ANNOTATIONS_FILE), "cuegrade annotate")
    annotations = load_annotations(path, corpus_by_id)
    missing = [a for a in corpus_by_id if a not in annotations]
    if missing:
        raise ValidationError(f"annotations missing for {len(missing)} answers (e.g. {missing[0]!r})")
    return annotations


def _annotated_rubrics(
    rubrics: Mapping[str, Rubric], records: Sequence[AnswerRecord]
) -> dict[str, AnnotatedRubric]:
    language_of = {}
    for rec in records:
        language_of.setdefault(rec.question_id, rec.language)
    out = {}
    for question_id, language in language_of.items():
        out[question_id] = AnnotatedRubric.build(_rubric_for(rubrics, question_id), language)
    return out


def build_embedding_table(
    cfg: PipelineConfig,
    annotations: Mapping[str, AnnotatedAnswer],
    rubric_anns: Mapping[str, AnnotatedRubric],
) -> EmbeddingTable:
    """Static file, contextual export, or the deterministic one-hot fallback."""
    if cfg.embeddings:
        path = require_artifact(cfg.embeddings)
        first = Path(path).open(encoding="utf-8").readline()
        if first.startswith("dim "):
            return EmbeddingTable.from_static_file(path)
        token_spans: dict[str, list[tuple[int, int]]] = {}
        for answer_id, ann in annotations.items():
            token_spans[answer_id] = [(t.char_start, t.char_end) for t in ann.tokens]
        for question_id, rubric_ann in rubric_anns.items():
            for item_id, item_tokens in enumerate(rubric_ann.item_tokens):
                key = rubric_record_key(question_id, item_id)
                token_spans[key] = [(t.char_start, t.char_end) for t in item_tokens]
        return EmbeddingTable.from_contextual_file(path, token_spans)
    vocab = set()
    for ann in annotations.values():
        vocab.update(t.text.casefold() for t in ann.tokens)
    for rubric_ann in rubric_anns.values():
        for item_tokens in rubric_ann.item_tokens:
            vocab.update(t.text.casefold() for t in item_tokens)
    return EmbeddingTable.one_hot(vocab)


def _load_silver(path) -> dict[str, SilverLabels]:
    out = {}
    for lineno, rec in iter_jsonl(path):
        check_version(rec, f"{path}:{lineno}")
        out[rec["answer_id"]] = SilverLabels(
            answer_id=rec["answer_id"], probs=[float(p) for p in rec["probs"]]
        )
    return out


# ---------------------------------------------------------------------------
# stages


def run_annotate(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    layers = load_preannotations(require_artifact(cfg.preannotations)) if cfg.preannotations else {}
    rows = []
    for rec in records:
        answer = annotate_answer(
            rec,
            external_annotations=layers.get(rec.answer_id),
            split_coordination=cfg.split_coordination,
        )
        rows.append(_annotation_record(answer))
    out = cfg.workpath(ANNOTATIONS_FILE)
    n = write_jsonl(out, rows)
    return {"stage": "annotate", "answers": n, "outputs": [str(out)]}


def run_silver(cfg: PipelineConfig, *, audit_votes: bool = True) -> dict:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    rubrics = _load_rubrics(cfg)
    annotations = _require_annotations(cfg, corpus_by_id)
    rubric_anns = _annotated_rubrics(rubrics, records)
    table = build_embedding_table(cfg, annotations, rubric_anns)

    matrices: list[VoteMatrix] = []
    for rec in records:
        matrices.append(
            apply_labeling_functions(
                annotations[rec.answer_id],
                rubric_anns[rec.question_id],
                table,
                soft_thresholds=cfg.soft_thresholds,
                default_soft_threshold=cfg.default_soft_threshold,
            )
        )

    outputs = []
    if audit_votes:
        vote_rows = []
        for m in matrices:
            triples = []
            for j in range(m.J):
                for t in range(m.T):
                    v = m.votes[j, t]
                    if not np.isnan(v):
                        triples.append([j, t, float(v)])
            vote_rows.append(
                {
                    "format_version": FORMAT_VERSION,
                    "answer_id": m.answer_id,
                    "function_ids": m.function_ids,
                    "votes": triples,
                }
            )
        votes_path = cfg.workpath(VOTES_FILE)
        write_jsonl(votes_path, vote_rows)
        outputs.append(str(votes_path))

    if cfg.aggregator == "hmm":
        params = hmm_fit([m for m in matrices if m.T > 0], iterations=cfg.hmm_iterations)
        silver = [
            hmm_posterior(params, m) if m.T > 0 else SilverLabels(m.answer_id, [])
            for m in matrices
        ]
        hmm_path = cfg.workpath(HMM_FILE)
        write_document(hmm_path, params.to_doc())
        outputs.append(str(hmm_path))
        warning = params.warning
    else:
        silver = [aggregate_simple(m, cfg.aggregator) for m in matrices]
        warning = None

    silver_rows = []
    for labels in silver:
        tokens = annotations[labels.answer_id].tokens
        silver_rows.append(
            {
                "format_version": FORMAT_VERSION,
                "answer_id": labels.answer_id,
                "probs": labels.probs,
                "token_spans": [[t.char_start, t.char_end] for t in tokens],
            }
        )
    silver_path = cfg.workpath(SILVER_FILE)
    n = write_jsonl(silver_path, silver_rows)
    outputs.insert(0, str(silver_path))
    summary = {"stage": "silver", "answers": n, "aggregator": cfg.aggregator, "outputs": outputs}
    if warning:
        summary["warning"] = warning
    return summary


def run_spans(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    rubrics = _load_rubrics(cfg)
    annotations = _require_annotations(cfg, corpus_by_id)
    rubric_anns = _annotated_rubrics(rubrics, records)
    table = build_embedding_table(cfg, annotations, rubric_anns)

    if cfg.external_probs:
        token_lists = {a: ann.tokens for a, ann in annotations.items()}
        grouped: dict[str, list[TaggerOutput]] = {}
        for out in load_external_probs(require_artifact(cfg.external_probs), token_lists):
            grouped.setdefault(out.answer_id, []).append(out)
        # the span-prediction export writes one record per rubric item
        taggers = {a: merge_tagger_outputs(outs) for a, outs in grouped.items()}
        missing = [a for a in corpus_by_id if a not in taggers]
        if missing:
            raise ValidationError(
                f"external tagger file lacks {len(missing)} answers (e.g. {missing[0]!r})"
            )
    else:
        silver_path = cfg.workpath(SILVER_FILE)
        if not silver_path.exists():
            raise MissingArtifactError(
                silver_path, "cuegrade silver (or pass --external-probs)"
            )
        silver = _load_silver(silver_path)
        missing = [a for a in corpus_by_id if a not in silver]
        if missing:
            raise ValidationError(f"silver labels missing for {len(missing)} answers")
        taggers = {
            a: TaggerOutput(answer_id=a, token_probs=silver[a].probs, provenance="hmm_baseline")
            for a in corpus_by_id
        }

    rows = []
    total_spans = 0
    total_duplicates = 0
    for rec in records:
        answer = annotations[rec.answer_id]
        tagger = taggers[rec.answer_id]
        if len(tagger.token_probs) != len(answer.tokens):
            raise ValidationError(
                f"{rec.answer_id}: tagger probs length {len(tagger.token_probs)} "
                f"!= token count {len(answer.tokens)}"
            )
        spans = extract_spans(
            tagger.token_probs, cfg.span_threshold, tokens=answer.tokens, answer_id=rec.answer_id
        )
        rubric_ann = rubric_anns[rec.question_id]
        for span in spans:
            assignment = assign_span_to_rubric(span, answer, rubric_ann, table)
            span.matched_item_id = assignment.item_id
            span.match_similarity = assignment.similarity
            span.degenerate = assignment.degenerate
        if tagger.char_spans:
            # count duplicates over the raw exported spans (pre-merge), the
            # quantity the duplicated-span analysis is about
            texts = [rec.student_answer[s:e] for s, e, _ in tagger.char_spans]
        else:
            texts = [rec.student_answer[s.char_start : s.char_end] for s in spans]
        total_duplicates += count_duplicate_spans(texts)
        total_spans += len(spans)
        rows.append(
            {
                "format_version": FORMAT_VERSION,
                "answer_id": rec.answer_id,
                "provenance": tagger.provenance,
                "model_id": tagger.model_id,
                "token_probs": [float(p) for p in tagger.token_probs],
                "spans": [
                    {
                        "token_start": s.token_start,
                        "token_end": s.token_end,
                        "char_start": s.char_start,
                        "char_end": s.char_end,
                        "mean_prob": s.mean_prob,
                        "matched_item_id": s.matched_item_id,
                        "match_similarity": s.match_similarity,
                        "degenerate": s.degenerate,
                    }
                    for s in spans
                ],
            }
        )
    out = cfg.workpath(SPANS_FILE)
    n = write_jsonl(out, rows)
    return {
        "stage": "spans",
        "answers": n,
        "spans": total_spans,
        "duplicates_per_answer": round(total_duplicates / max(n, 1), 4),
        "outputs": [str(out)],
    }


def _load_spans(path) -> dict[str, dict]:
    out = {}
    for lineno, rec in iter_jsonl(path):
        check_version(rec, f"{path}:{lineno}")
        spans = [
            JustificationSpan(
                answer_id=rec["answer_id"],
                token_start=int(s["token_start"]),
                token_end=int(s["token_end"]),
                mean_prob=float(s["mean_prob"]),
                char_start=s["char_start"],
                char_end=s["char_end"],
                matched_item_id=s["matched_item_id"],
                match_similarity=s["match_similarity"],
                degenerate=bool(s.get("degenerate", False)),
            )
            for s in rec["spans"]
        ]
        out[rec["answer_id"]] = {
            "spans": spans,
            "provenance": rec.get("provenance", "hmm_baseline"),
            "token_probs": [float(p) for p in rec.get("token_probs", [])],
        }
    return out


def run_score_vectors(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    rubrics = _load_rubrics(cfg)
    annotations = _require_annotations(cfg, corpus_by_id)
    rubric_anns = _annotated_rubrics(rubrics, records)
    table = build_embedding_table(cfg, annotations, rubric_anns)
    spans_by_id = _load_spans(require_artifact(cfg.workpath(SPANS_FILE), "cuegrade spans"))

    rows = []
    for rec in records:
        if rec.answer_id not in spans_by_id:
            raise ValidationError(f"spans missing for answer {rec.answer_id!r}")
        spans = spans_by_id[rec.answer_id]["spans"]
        if cfg.scoring_strategy == "fuzzy":
            vector = scoring_vector_fuzzy(
                spans, annotations[rec.answer_id], rubric_anns[rec.question_id], table
            )
        else:
            vector = scoring_vector_hard(
                spans, rubrics[rec.question_id], answer_id=rec.answer_id
            )
        vector.validate(rubrics[rec.question_id])
        rows.append(
            {
                "format_version": FORMAT_VERSION,
                "answer_id": rec.answer_id,
                "question_id": rec.question_id,
                "strategy": vector.strategy,
                "values": vector.values,
            }
        )
    out = cfg.workpath(VECTORS_FILE)
    n = write_jsonl(out, rows)
    return {"stage": "score-vectors", "answers": n, "strategy": cfg.scoring_strategy, "outputs": [str(out)]}


def _load_vectors(path) -> dict[str, ScoringVector]:
    out = {}
    for lineno, rec in iter_jsonl(path):
        check_version(rec, f"{path}:{lineno}")
        out[rec["answer_id"]] = ScoringVector(
            answer_id=rec["answer_id"],
            question_id=rec["question_id"],
            values=[float(v) for v in rec["values"]],
            strategy=rec["strategy"],
        )
    return out


def run_train_head(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    vectors = _load_vectors(require_artifact(cfg.workpath(VECTORS_FILE), "cuegrade score-vectors"))

    doc: dict = {"format_version": FORMAT_VERSION, "head": cfg.head}
    trained = 0
    if cfg.head == "summation":
        doc["params"] = {"threshold": cfg.summation_threshold}
    else:
        doc["params"] = {
            "max_depth": cfg.tree_max_depth,
            "min_samples_leaf": cfg.tree_min_samples_leaf,
        }
        by_question: dict[str, list[AnswerRecord]] = {}
        for rec in records:
            if rec.split == "train":
                by_question.setdefault(rec.question_id, []).append(rec)
        if not by_question:
            raise ValidationError("no training answers (split == train) in the corpus")
        models = {}
        for question_id in sorted(by_question):
            train_records = by_question[question_id]
            train_vectors = []
            train_scores = []
            for rec in train_records:
                if rec.answer_id not in vectors:
                    raise ValidationError(f"scoring vector missing for {rec.answer_id!r}")
                train_vectors.append(vectors[rec.answer_id])
                train_scores.append(rec.score)
            model = tree_fit(
                train_vectors,
                train_scores,
                max_depth=cfg.tree_max_depth,
                min_samples_leaf=cfg.tree_min_samples_leaf,
            )
            models[question_id] = model.to_doc()
            trained += 1
        doc["models"] = models
    out = cfg.workpath(MODEL_FILE)
    write_document(out, doc)
    return {"stage": "train-head", "head": cfg.head, "questions": trained, "outputs": [str(out)]}


def run_grade(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    rubrics = _load_rubrics(cfg)
    vectors = _load_vectors(require_artifact(cfg.workpath(VECTORS_FILE), "cuegrade score-vectors"))
    spans_by_id = _load_spans(require_artifact(cfg.workpath(SPANS_FILE), "cuegrade spans"))

    model_doc = None
    model_path = cfg.workpath(MODEL_FILE)
    if cfg.head == "decision_tree":
        model_doc = read_document(require_artifact(model_path, "cuegrade train-head"))
        check_version(model_doc, str(model_path))
        if model_doc.get("head") != "decision_tree":
            raise ValidationError(f"{model_path}: trained head is {model_doc.get('head')!r}, not decision_tree")
        models = {q: DecisionTreeModel.from_doc(d) for q, d in model_doc["models"].items()}
        threshold = None
    else:
        threshold = cfg.summation_threshold
        if model_path.exists():
            doc = read_document(model_path)
            if doc.get("head") == "summation":
                check_version(doc, str(model_path))
                threshold = float(doc["params"]["threshold"])
        models = {}

    explanations = []
    for rec in records:
        if rec.answer_id not in vectors:
            raise ValidationError(f"scoring vector missing for {rec.answer_id!r}")
        vector = vectors[rec.answer_id]
        spans = spans_by_id.get(rec.answer_id, {"spans": []})["spans"]
        rubric = _rubric_for(rubrics, rec.question_id)
        if cfg.head == "summation":
            params = SummationParams(threshold=threshold)
            final = summation_grade(vector, rubric, params)
            expl = explain(
                rec.answer_id, spans, vector, "summation", final,
                awarded=summation_awarded(vector, rubric, params),
            )
        else:
            if rec.question_id not in models:
                raise ValidationError(f"no trained tree for question {rec.question_id!r}")
            prediction, path = tree_decision_path(models[rec.question_id], vector.values)
            expl = explain(
                rec.answer_id, spans, vector, "decision_tree", prediction, tree_path=path
            )
        expl.validate(rubric)
        explanations.append(expl)

    out = cfg.workpath(EXPLANATIONS_FILE)
    n = write_explanations(explanations, out, "machine")
    return {"stage": "grade", "head": cfg.head, "answers": n, "outputs": [str(out)]}


def run_evaluate(cfg: PipelineConfig) -> dict:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    rubrics = _load_rubrics(cfg)
    explanations = load_explanations(require_artifact(cfg.workpath(EXPLANATIONS_FILE), "cuegrade grade"))
    spans_by_id = _load_spans(require_artifact(cfg.workpath(SPANS_FILE), "cuegrade spans"))
    silver_path = cfg.workpath(SILVER_FILE)
    silver = _load_silver(silver_path) if silver_path.exists() else {}

    if cfg.eval_split == "all":
        keep = {r.answer_id for r in records}
    else:
        keep = {r.answer_id for r in records if r.split == cfg.eval_split}
    rows = [e for e in explanations if e.answer_id in keep]
    if not rows:
        raise ValidationError(f"no graded answers in split {cfg.eval_split!r}")

    golds = [corpus_by_id[e.answer_id].score for e in rows]
    preds = [e.final_score for e in rows]
    overall_rmse = rmse(preds, golds)

    per_question: dict[str, dict] = {}
    by_question: dict[str, list[int]] = {}
    for idx, expl in enumerate(rows):
        by_question.setdefault(corpus_by_id[expl.answer_id].question_id, []).append(idx)
    for question_id in sorted(by_question):
        idxs = by_question[question_id]
        q_pred = [preds[i] for i in idxs]
        q_gold = [golds[i] for i in idxs]
        accuracy, macro_f1, weighted_f1 = nine_class_report(q_pred, q_gold)
        per_question[question_id] = {
            "n": len(idxs),
            "rmse": rmse(q_pred, q_gold),
            "accuracy": accuracy,
            "macro_f1": macro_f1,
            "weighted_f1": weighted_f1,
            "rubric_length": len(_rubric_for(rubrics, question_id)),
        }

    # token-level agreement between the tagger probabilities and silver labels
    token_pred: list[float] = []
    token_silver: list[float] = []
    provenances = set()
    for expl in rows:
        entry = spans_by_id.get(expl.answer_id)
        labels = silver.get(expl.answer_id)
        if entry and labels and entry["token_probs"]:
            token_pred.extend(entry["token_probs"])
            token_silver.extend(labels.probs)
            provenances.add(entry["provenance"])
    if token_pred:
        t_precision, t_recall, t_f1 = token_macro_prf(token_pred, token_silver, cfg.span_threshold)
        token_block = {
            "precision": t_precision,
            "recall": t_recall,
            "f1": t_f1,
            "provenance": "+".join(sorted(provenances)),
            "note": "tagger equals the silver labels, agreement is trivially perfect"
            if provenances == {"hmm_baseline"}
            else None,
        }
    else:
        token_block = None

    # task metrics grouped by gold grade class
    reports = []
    duplicates = 0
    for expl in rows:
        entry = spans_by_id.get(expl.answer_id)
        if not entry:
            continue
        T = len(entry["token_probs"])
        if T == 0:
            continue
        reports.append((task_metrics(entry["spans"], T), corpus_by_id[expl.answer_id].score))
        texts = [
            corpus_by_id[expl.answer_id].student_answer[s.char_start : s.char_end]
            for s in entry["spans"]
        ]
        duplicates += count_duplicate_spans(texts)
    grouped = class_grouped_task_metrics([r for r, _ in reports], [g for _, g in reports]) if reports else {}

    # rubric length vs per-question metric correlation (needs >= 3 questions)
    correlation: dict[str, object] = {}
    lengths = [per_question[q]["rubric_length"] for q in sorted(per_question)]
    for metric in ("weighted_f1", "macro_f1", "accuracy"):
        series = [per_question[q][metric] for q in sorted(per_question)]
        try:
            r, p = pearson([float(x) for x in lengths], series)
            correlation[metric] = {"r": r, "p": p}
        except ValidationError as exc:
            correlation[metric] = None
            correlation.setdefault("note", str(exc))

    report = {
        "format_version": FORMAT_VERSION,
        "split": cfg.eval_split,
        "n_answers": len(rows),
        "overall": {"rmse": overall_rmse},
        "per_question": per_question,
        "token_metrics": token_block,
        "task_metrics_by_class": grouped,
        "duplicate_spans_per_answer": duplicates / len(rows),
        "rubric_length_correlation": correlation,
    }
    out_json = cfg.workpath(REPORT_JSON)
    write_document(out_json, report)
    out_table = cfg.workpath(REPORT_TABLE)
    artifacts.atomic_write_text(out_table, _format_report_table(report))
    outputs = [str(out_json), str(out_table)]

    if cfg.figures:
        from .figures import render_report_figures

        figure_paths = render_report_figures(
            golds, preds, grouped, cfg.workpath(FIGURES_DIR)
        )
        outputs.extend(str(p) for p in figure_paths)

    return {"stage": "evaluate", "split": cfg.eval_split, "answers": len(rows), "rmse": round(overall_rmse, 6), "outputs": outputs}


def _format_report_table(report: dict) -> str:
    lines = [
        f"evaluation report (split={report['split']}, n={report['n_answers']})",
        f"overall RMSE: {report['overall']['rmse']:.4f}",
        "",
        f"{'question':<16}{'n':>4}{'RMSE':>8}{'acc':>8}{'macroF1':>9}{'wF1':>8}{'|rubric|':>9}",
    ]
    for question_id, row in report["per_question"].items():
        lines.append(
            f"{question_id:<16}{row['n']:>4}{row['rmse']:>8.3f}{row['accuracy']:>8.3f}"
            f"{row['macro_f1']:>9.3f}{row['weighted_f1']:>8.3f}{row['rubric_length']:>9}"
        )
    token = report.get("token_metrics")
    if token:
        lines += [
            "",
            f"token macro P/R/F1 vs silver ({token['provenance']}): "
            f"{token['precision']:.3f}/{token['recall']:.3f}/{token['f1']:.3f}",
        ]
    grouped = report.get("task_metrics_by_class") or {}
    if grouped:
        lines += ["", f"{'class':<12}{'n':>4}{'cues':>8}{'tok/cue':>9}{'pct':>8}"]
        for cls, row in grouped.items():
            lines.append(
                f"{cls:<12}{row['n']:>4}{row['num_cues']:>8.2f}"
                f"{row['avg_tokens_per_cue']:>9.2f}{row['pct_cue_tokens']:>8.3f}"
            )
    lines += ["", f"duplicate spans per answer: {report['duplicate_spans_per_answer']:.2f}"]
    correlation = report.get("rubric_length_correlation") or {}
    for metric in ("weighted_f1", "macro_f1", "accuracy"):
        entry = correlation.get(metric)
        if entry:
            lines.append(f"rubric length vs {metric}: r={entry['r']:.3f} p={entry['p']:.3f}")
    if correlation.get("note"):
        lines.append(f"correlation note: {correlation['note']}")
    lines.append("")
    return "\n".join(lines)


def run_inspect(cfg: PipelineConfig, answer_id: str) -> str:
    records = _load_filtered_corpus(cfg)
    corpus_by_id = {r.answer_id: r for r in records}
    if answer_id not in corpus_by_id:
        raise ValidationError(f"unknown answer_id {answer_id!r}")
    rubrics = _load_rubrics(cfg)
    explanations = load_explanations(require_artifact(cfg.workpath(EXPLANATIONS_FILE), "cuegrade grade"))
    for expl in explanations:
        if expl.answer_id == answer_id:
            record = corpus_by_id[answer_id]
            return render_explanation_markdown(expl, record, _rubric_for(rubrics, record.question_id))
    raise ValidationError(f"no explanation found for {answer_id!r}")
