"""Justification-cue spans: extraction from token probabilities, rubric
assignment, external tagger ingestion, and the task-specific metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .annotate import AnnotatedToken
from .artifacts import check_version, iter_jsonl
from .errors import ValidationError
from .labeling import AnnotatedAnswer, AnnotatedRubric, rubric_record_key
from .similarity import EmbeddingTable, embed_score


@dataclass
class JustificationSpan:
    answer_id: str
    token_start: int
    token_end: int  # exclusive
    mean_prob: float
    char_start: int | None = None
    char_end: int | None = None
    matched_item_id: int | None = None
    match_similarity: float | None = None
    degenerate: bool = False

    def __len__(self) -> int:
        return self.token_end - self.token_start


@dataclass
class TaggerOutput:
    answer_id: str
    token_probs: list[float]
    provenance: str  # "hmm_baseline" | "external"
    model_id: str | None = None
    # raw character spans from the interchange record; several records may
    # target the same answer (the span-prediction export writes one record
    # per rubric item), so duplicates live here rather than in token_probs
    char_spans: list[tuple[int, int, float]] = field(default_factory=list)


class TaskMetrics(NamedTuple):
    num_cues: int
    avg_tokens_per_cue: float
    pct_cue_tokens: float


class RubricAssignment(NamedTuple):
    item_id: int
    similarity: float
    degenerate: bool


def extract_spans(
    probs: Sequence[float],
    threshold: float = 0.5,
    *,
    tokens: Sequence[AnnotatedToken] | None = None,
    answer_id: str = "",
) -> list[JustificationSpan]:
    """Maximal runs of tokens with probability strictly above the threshold."""
    spans: list[JustificationSpan] = []
    start = None
    for i, p in enumerate(list(probs) + [None]):
        above = p is not None and p > threshold
        if above and start is None:
            start = i
        elif not above and start is not None:
            run = probs[start:i]
            span = JustificationSpan(
                answer_id=answer_id,
                token_start=start,
                token_end=i,
                mean_prob=float(sum(run) / len(run)),
            )
            if tokens is not None:
                span.char_start = tokens[start].char_start
                span.char_end = tokens[i - 1].char_end
            spans.append(span)
            start = None
    return spans


def assign_span_to_rubric(
    span: JustificationSpan,
    answer: AnnotatedAnswer,
    rubric_ann: AnnotatedRubric,
    table: EmbeddingTable,
) -> RubricAssignment:
    """Argmax embedding-F1 rubric item for the span; ties break to the lowest
    item_id, and an all-zero similarity profile is flagged degenerate."""
    if not rubric_ann.rubric.items:
        raise ValidationError(f"rubric {rubric_ann.rubric.question_id}: zero items")
    span_tokens = answer.tokens[span.token_start : span.token_end]
    best_id, best_sim = 0, -1.0
    any_nondegenerate = False
    for item_id, item_tokens in enumerate(rubric_ann.item_tokens):
        score = embed_score(
            span_tokens,
            item_tokens,
            table,
            cand_record=answer.record.answer_id,
            cand_base=span.token_start,
            ref_record=rubric_record_key(rubric_ann.rubric.question_id, item_id),
        )
        any_nondegenerate = any_nondegenerate or not score.degenerate
        if score.f1 > best_sim:
            best_id, best_sim = item_id, score.f1
    best_sim = max(best_sim, 0.0)
    return RubricAssignment(best_id, best_sim, degenerate=(best_sim == 0.0 or not any_nondegenerate))


def load_external_probs(
    path,
    annotations: Mapping[str, Sequence[AnnotatedToken]],
) -> list[TaggerOutput]:
    """Read the tagger interchange file and remap its character-span
    probabilities onto artifact tokens by overlap-weighted average."""
    outputs = []
    for lineno, rec in iter_jsonl(path):
        where = f"{path}:{lineno}"
        check_version(rec, where)
        answer_id = rec.get("answer_id")
        if answer_id not in annotations:
            raise ValidationError(f"{where}: unknown answer_id {answer_id!r}")
        spans = rec.get("spans")
        if not isinstance(spans, list):
            raise ValidationError(f"{where}: missing spans list")
        parsed = []
        for s in spans:
            try:
                start, end, prob = int(s["char_start"]), int(s["char_end"]), float(s["prob"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{where}: malformed span: {exc}") from exc
            if start >= end:
                raise ValidationError(f"{where}: empty span [{start},{end})")
            if not 0.0 <= prob <= 1.0:
                raise ValidationError(f"{where}: prob out of [0,1]: {prob}")
            parsed.append((start, end, prob))
        parsed.sort()
        for (a_start, a_end, _), (b_start, _, _) in zip(parsed, parsed[1:]):
            if b_start < a_end:
                raise ValidationError(f"{where}: overlapping spans at char {b_start}")
        tokens = annotations[answer_id]
        probs = []
        for tok in tokens:
            tok_len = tok.char_end - tok.char_start
            weighted = 0.0
            for s_start, s_end, prob in parsed:
                overlap = min(tok.char_end, s_end) - max(tok.char_start, s_start)
                if overlap > 0:
                    weighted += overlap * prob
            probs.append(weighted / tok_len)
        outputs.append(
            TaggerOutput(
                answer_id=str(answer_id),
                token_probs=probs,
                provenance="external",
                model_id=rec.get("model_id"),
                char_spans=parsed,
            )
        )
    return outputs


def merge_tagger_outputs(outputs: Sequence[TaggerOutput]) -> TaggerOutput:
    """Combine several records for one answer by per-token maximum; raw spans
    are concatenated in file order so duplicates stay countable."""
    if not outputs:
        raise ValidationError("nothing to merge")
    if len(outputs) == 1:
        return outputs[0]
    answer_id = outputs[0].answer_id
    T = len(outputs[0].token_probs)
    for out in outputs:
        if out.answer_id != answer_id or len(out.token_probs) != T:
            raise ValidationError(f"{answer_id}: inconsistent records to merge")
    probs = [max(out.token_probs[t] for out in outputs) for t in range(T)]
    model_ids = sorted({out.model_id for out in outputs if out.model_id})
    spans = [s for out in outputs for s in out.char_spans]
    return TaggerOutput(
        answer_id=answer_id,
        token_probs=probs,
        provenance="external",
        model_id="+".join(model_ids) if model_ids else None,
        char_spans=spans,
    )


def task_metrics(spans: Sequence[JustificationSpan], T: int) -> TaskMetrics:
    """Cue count, mean cue length in tokens, and cue-token share of the answer."""
    if T <= 0:
        raise ValidationError("task metrics need a positive token count")
    lengths = [len(s) for s in spans]
    total = sum(lengths)
    return TaskMetrics(
        num_cues=len(spans),
        avg_tokens_per_cue=(total / len(spans)) if spans else 0.0,
        pct_cue_tokens=total / T,
    )


def count_duplicate_spans(span_texts: Sequence[str]) -> int:
    """Spans whose normalized text repeats an earlier span's (the duplicate-span
    diagnostic reported per answer)."""
    seen: set[str] = set()
    duplicates = 0
    for text in span_texts:
        normalized = " ".join(text.casefold().split())
        if normalized in seen:
            duplicates += 1
        else:
            seen.add(normalized)
    return duplicates
