"""Explainable short-answer grading over weakly labeled justification cues."""

from .annotate import AnnotatedToken, Candidate, annotate, generate_candidates, segment_sentences
from .corpus import (
    AnswerRecord,
    GradeExplanation,
    Rubric,
    RubricItem,
    load_corpus,
    load_explanations,
    load_rubrics,
    write_explanations,
)
from .errors import CueGradeError, ValidationError
from .grading import (
    DecisionTreeModel,
    ScoringVector,
    SummationParams,
    scoring_vector_fuzzy,
    scoring_vector_hard,
    summation_grade,
    tree_fit,
    tree_predict,
)
from .hmm import HmmParams, hmm_fit, hmm_posterior
from .labeling import (
    AnnotatedAnswer,
    AnnotatedRubric,
    SilverLabels,
    VoteMatrix,
    aggregate_simple,
    annotate_answer,
    apply_labeling_functions,
)
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
    word_alignment_coverage,
)
from .spans import (
    JustificationSpan,
    TaggerOutput,
    TaskMetrics,
    assign_span_to_rubric,
    count_duplicate_spans,
    extract_spans,
    load_external_probs,
    task_metrics,
)
from .evaluation import nine_class_report, pearson, rmse, token_macro_prf

__version__ = "0.1.0"
