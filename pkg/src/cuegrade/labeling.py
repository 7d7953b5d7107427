"""Labeling functions over cue candidates and simple vote aggregation.

The registry mirrors the feature matrix the pipeline was designed around:
ten hard matchers compare feature sequences (noun phrases, lemmas, POS,
shapes, stems, dependencies, each with a stopword-free variant) at sentence
granularity and vote 1 on equality; word alignment fires as a hard vote
when its coverage reaches 0.5; the soft matchers (n-gram overlap and ROUGE
orders 1-5, ROUGE-L, BERTScore-style embedding F1, BLEU, METEOR, Jaccard
and edit similarity plus lemmatized variants) emit their raw score as a
vote once it clears the per-function threshold. Votes from overlapping
candidates resolve to the per-token maximum; everything else abstains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .annotate import AnnotatedToken, Candidate, NO_DEP, annotate, generate_candidates, segment_sentences
from .corpus import AnswerRecord, Rubric
from .errors import ValidationError
from .similarity import (
    EmbeddingTable,
    bleu,
    edit_similarity,
    embed_score,
    jaccard,
    meteor_lite,
    ngram_overlap,
    rouge_l,
    rouge_n,
    token_view,
    word_alignment_coverage,
)

ABSTAIN = float("nan")


@dataclass
class AnnotatedAnswer:
    record: AnswerRecord
    tokens: list[AnnotatedToken]
    sentences: list[Candidate]
    candidates: list[Candidate]  # sentences + phrases


@dataclass
class AnnotatedRubric:
    rubric: Rubric
    item_tokens: list[list[AnnotatedToken]]

    @staticmethod
    def build(rubric: Rubric, language: str) -> "AnnotatedRubric":
        return AnnotatedRubric(
            rubric=rubric,
            item_tokens=[annotate(item.key_element, language) for item in rubric.items],
        )


def annotate_answer(
    record: AnswerRecord,
    *,
    external_annotations=None,
    split_coordination: bool = True,
) -> AnnotatedAnswer:
    tokens = annotate(record.student_answer, record.language, external_annotations)
    sentences = segment_sentences(tokens)
    candidates = generate_candidates(tokens, sentences, split_coordination=split_coordination)
    return AnnotatedAnswer(record=record, tokens=tokens, sentences=sentences, candidates=candidates)


@dataclass
class VoteMatrix:
    answer_id: str
    function_ids: list[str]
    votes: np.ndarray  # (J, T) floats, NaN encodes ABSTAIN

    @property
    def J(self) -> int:
        return self.votes.shape[0]

    @property
    def T(self) -> int:
        return self.votes.shape[1]


@dataclass
class SilverLabels:
    answer_id: str
    probs: list[float]


# ---------------------------------------------------------------------------
# feature sequences for hard matchers


def _feature_seq(tokens: Sequence[AnnotatedToken], attr: str, drop_stopwords: bool) -> tuple[str, ...]:
    return tuple(
        getattr(t, attr)
        for t in tokens
        if t.pos != "PUNCT" and not (drop_stopwords and t.is_stopword)
    )


def _noun_phrases(tokens: Sequence[AnnotatedToken]) -> tuple[tuple[str, ...], ...]:
    """Maximal runs over {DET, ADJ, NOUN, NUM} containing a NOUN, as lemma tuples."""
    phrases = []
    run: list[AnnotatedToken] = []
    for tok in list(tokens) + [None]:
        if tok is not None and tok.pos in ("DET", "ADJ", "NOUN", "NUM"):
            run.append(tok)
            continue
        if run and any(t.pos == "NOUN" for t in run):
            phrases.append(tuple(t.lemma for t in run))
        run = []
    return tuple(phrases)


def _hard_equal(cand_seq, item_seq) -> bool:
    return bool(cand_seq) and bool(item_seq) and cand_seq == item_seq


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class LabelingFunction:
    func_id: str
    soft: bool
    granularity: str  # "sentence" | "phrase" | "both"
    scorer: Callable  # (cand_tokens, item_tokens, ctx) -> float | None

    def applies_to(self, kind: str) -> bool:
        return self.granularity == "both" or self.granularity == kind


@dataclass
class _LfContext:
    table: EmbeddingTable
    answer_id: str
    question_id: str
    cand_start: int
    item_index: int


def _hard_view(attr: str, drop_stopwords: bool = False):
    def scorer(cand, item, ctx):
        if attr == "dep":
            if any(t.dep == NO_DEP for t in cand) or any(t.dep == NO_DEP for t in item):
                return None  # fallback layer has no dependencies
        c = _feature_seq(cand, attr, drop_stopwords)
        r = _feature_seq(item, attr, drop_stopwords)
        return 1.0 if _hard_equal(c, r) else None

    return scorer


def _noun_phrase_scorer(cand, item, ctx):
    c, r = _noun_phrases(cand), _noun_phrases(item)
    return 1.0 if _hard_equal(c, r) else None


def _word_alignment_scorer(cand, item, ctx):
    coverage = word_alignment_coverage(
        cand,
        item,
        ctx.table,
        cand_record=ctx.answer_id,
        cand_base=ctx.cand_start,
        ref_record=_rubric_record_id(ctx.question_id, ctx.item_index),
    )
    return 1.0 if coverage >= 0.5 else None


def _seq_metric(metric, view: str = "surface", **kwargs):
    def scorer(cand, item, ctx):
        return metric(token_view(cand, view), token_view(item, view), **kwargs)

    return scorer


def _meteor_scorer(cand, item, ctx):
    return meteor_lite(
        token_view(cand, "surface"),
        token_view(item, "surface"),
        token_view(cand, "stem"),
        token_view(item, "stem"),
    )


def _embed_scorer(cand, item, ctx):
    return embed_score(
        cand,
        item,
        ctx.table,
        cand_record=ctx.answer_id,
        cand_base=ctx.cand_start,
        ref_record=_rubric_record_id(ctx.question_id, ctx.item_index),
    ).f1


def rubric_record_key(question_id: str, item_index: int) -> str:
    return f"rubric::{question_id}::{item_index}"


_rubric_record_id = rubric_record_key


def _build_registry() -> list[LabelingFunction]:
    lf = LabelingFunction
    registry = [
        lf("noun_phrase_match", False, "sentence", _noun_phrase_scorer),
        lf("lemma_match", False, "sentence", _hard_view("lemma")),
        lf("pos_match", False, "sentence", _hard_view("pos")),
        lf("shape_match", False, "sentence", _hard_view("shape")),
        lf("stem_match", False, "sentence", _hard_view("stem")),
        lf("dep_match", False, "sentence", _hard_view("dep")),
        lf("lemma_match_no_stop", False, "sentence", _hard_view("lemma", True)),
        lf("stem_match_no_stop", False, "sentence", _hard_view("stem", True)),
        lf("pos_match_no_stop", False, "sentence", _hard_view("pos", True)),
        lf("dep_match_no_stop", False, "sentence", _hard_view("dep", True)),
    ]
    for n in range(1, 6):
        registry.append(lf(f"ngram_overlap_{n}", True, "phrase", _seq_metric(ngram_overlap, n=n)))
    for n in range(1, 6):
        registry.append(lf(f"rouge_{n}", True, "phrase", _seq_metric(rouge_n, n=n)))
    registry += [
        lf("rouge_l", True, "both", _seq_metric(rouge_l)),
        lf("word_alignment", False, "sentence", _word_alignment_scorer),
        lf("bert_score", True, "both", _embed_scorer),
        lf("bleu", True, "both", _seq_metric(bleu)),
        lf("meteor", True, "both", _meteor_scorer),
        lf("jaccard", True, "phrase", _seq_metric(jaccard)),
        lf("jaccard_lemma", True, "phrase", _seq_metric(jaccard, view="lemma")),
        lf("edit_distance", True, "phrase", _seq_metric(edit_similarity)),
        lf("edit_distance_lemma", True, "phrase", _seq_metric(edit_similarity, view="lemma")),
    ]
    return registry


REGISTRY: list[LabelingFunction] = _build_registry()
FUNCTION_IDS: list[str] = [f.func_id for f in REGISTRY]
SOFT_FUNCTION_IDS: frozenset[str] = frozenset(f.func_id for f in REGISTRY if f.soft)


def apply_labeling_functions(
    answer: AnnotatedAnswer,
    rubric_ann: AnnotatedRubric,
    table: EmbeddingTable,
    *,
    soft_thresholds: Mapping[str, float] | None = None,
    default_soft_threshold: float = 0.5,
) -> VoteMatrix:
    """Run every registered function over the answer's candidates against every
    rubric item; overlapping votes per function resolve to the maximum."""
    if not rubric_ann.rubric.items:
        raise ValidationError(f"rubric {rubric_ann.rubric.question_id}: zero items")
    thresholds = dict(soft_thresholds or {})
    T = len(answer.tokens)
    votes = np.full((len(REGISTRY), T), np.nan)
    for j, func in enumerate(REGISTRY):
        threshold = thresholds.get(func.func_id, default_soft_threshold)
        for cand in answer.candidates:
            if not func.applies_to(cand.kind):
                continue
            cand_tokens = answer.tokens[cand.start : cand.end]
            for item_index, item_tokens in enumerate(rubric_ann.item_tokens):
                ctx = _LfContext(
                    table=table,
                    answer_id=answer.record.answer_id,
                    question_id=rubric_ann.rubric.question_id,
                    cand_start=cand.start,
                    item_index=item_index,
                )
                raw = func.scorer(cand_tokens, item_tokens, ctx)
                if raw is None:
                    continue
                if func.soft and raw < threshold:
                    continue
                value = float(raw)
                segment = votes[j, cand.start : cand.end]
                votes[j, cand.start : cand.end] = np.fmax(segment, value)
    return VoteMatrix(answer_id=answer.record.answer_id, function_ids=list(FUNCTION_IDS), votes=votes)


# ---------------------------------------------------------------------------
# lightweight aggregation

AGGREGATION_METHODS = ("average_all", "average_soft_only", "max", "average_non_zero", "sum_capped")


def aggregate_simple(matrix: VoteMatrix, method: str) -> SilverLabels:
    votes = matrix.votes
    if method == "average_all":
        filled = np.nan_to_num(votes, nan=0.0)
        probs = filled.mean(axis=0) if matrix.J else np.zeros(matrix.T)
    elif method == "average_soft_only":
        soft_rows = [j for j, fid in enumerate(matrix.function_ids) if fid in SOFT_FUNCTION_IDS]
        if not soft_rows:
            probs = np.zeros(matrix.T)
        else:
            filled = np.nan_to_num(votes[soft_rows], nan=0.0)
            probs = filled.mean(axis=0)
    elif method == "max":
        if matrix.J == 0:
            probs = np.zeros(matrix.T)
        else:
            observed = ~np.isnan(votes)
            filled = np.where(observed, votes, -np.inf)
            probs = np.where(observed.any(axis=0), filled.max(axis=0), 0.0)
    elif method == "average_non_zero":
        counted = ~np.isnan(votes) & (votes != 0.0)
        sums = np.where(counted, votes, 0.0).sum(axis=0)
        counts = counted.sum(axis=0)
        probs = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    elif method == "sum_capped":
        probs = np.minimum(1.0, np.nan_to_num(votes, nan=0.0).sum(axis=0))
    else:
        raise ValidationError(f"unknown aggregation method {method!r}; options: {AGGREGATION_METHODS}")
    return SilverLabels(answer_id=matrix.answer_id, probs=[float(p) for p in probs])
