"""Scoring vectors and the symbolic grading heads.

The fuzzy strategy scores every rubric item against every detected cue and
keeps the per-item maximum (dense vectors); the hard strategy only credits
an item with the cues exclusively assigned to it (sparse vectors). Heads:
threshold summation of rubric points, and per-question CART regression
trees with fully deterministic split selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import GradeExplanation, Rubric
from .errors import ValidationError
from .labeling import AnnotatedAnswer, AnnotatedRubric, rubric_record_key
from .similarity import EmbeddingTable, embed_score
from .spans import JustificationSpan


@dataclass
class ScoringVector:
    answer_id: str
    question_id: str
    values: list[float]
    strategy: str  # "hard" | "fuzzy"

    def validate(self, rubric: Rubric | None = None) -> None:
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{self.answer_id}: scoring value out of [0,1]: {v}")
        if rubric is not None and len(self.values) != len(rubric.items):
            raise ValidationError(
                f"{self.answer_id}: {len(self.values)} values for a {len(rubric.items)}-item rubric"
            )


@dataclass(frozen=True)
class SummationParams:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError(f"summation threshold out of [0,1]: {self.threshold}")


def scoring_vector_fuzzy(
    spans: Sequence[JustificationSpan],
    answer: AnnotatedAnswer,
    rubric_ann: AnnotatedRubric,
    table: EmbeddingTable,
) -> ScoringVector:
    """values[i] = max over cues of embedding F1 against item i (0 without cues)."""
    values = [0.0] * len(rubric_ann.rubric.items)
    for span in spans:
        span_tokens = answer.tokens[span.token_start : span.token_end]
        for item_id, item_tokens in enumerate(rubric_ann.item_tokens):
            f1 = embed_score(
                span_tokens,
                item_tokens,
                table,
                cand_record=answer.record.answer_id,
                cand_base=span.token_start,
                ref_record=rubric_record_key(rubric_ann.rubric.question_id, item_id),
            ).f1
            if f1 > values[item_id]:
                values[item_id] = f1
    return ScoringVector(
        answer_id=answer.record.answer_id,
        question_id=rubric_ann.rubric.question_id,
        values=values,
        strategy="fuzzy",
    )


def scoring_vector_hard(
    spans: Sequence[JustificationSpan],
    rubric: Rubric,
    *,
    answer_id: str = "",
) -> ScoringVector:
    """values[i] = best similarity among cues assigned to item i, else 0."""
    values = [0.0] * len(rubric.items)
    for span in spans:
        if span.matched_item_id is None or span.match_similarity is None:
            raise ValidationError(f"{answer_id or span.answer_id}: hard strategy needs assigned spans")
        i = span.matched_item_id
        if not 0 <= i < len(values):
            raise ValidationError(f"{answer_id or span.answer_id}: matched_item_id {i} out of range")
        values[i] = max(values[i], span.match_similarity)
    return ScoringVector(
        answer_id=answer_id or (spans[0].answer_id if spans else ""),
        question_id=rubric.question_id,
        values=values,
        strategy="hard",
    )


def summation_grade(vector: ScoringVector, rubric: Rubric, params: SummationParams) -> float:
    """Sum the points of items scoring strictly above the threshold, normalized
    by max_points and clamped to 1."""
    if rubric.max_points <= 0:
        raise ValidationError(f"rubric {rubric.question_id}: max_points must be > 0")
    vector.validate(rubric)
    raw = sum(
        item.points for item, value in zip(rubric.items, vector.values) if value > params.threshold
    )
    return min(1.0, raw / rubric.max_points)


def summation_awarded(vector: ScoringVector, rubric: Rubric, params: SummationParams) -> list[tuple[int, float]]:
    return [
        (item.item_id, item.points)
        for item, value in zip(rubric.items, vector.values)
        if value > params.threshold
    ]


# ---------------------------------------------------------------------------
# CART regression tree


@dataclass
class DecisionTreeModel:
    question_id: str
    n_features: int
    max_depth: int | None
    min_samples_leaf: int
    nodes: list[dict] = field(default_factory=list)
    # internal node: {"feature_index", "split_threshold", "left", "right"}
    # leaf: {"prediction", "n_train"}

    def to_doc(self) -> dict:
        return {
            "question_id": self.question_id,
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "nodes": [dict(n) for n in self.nodes],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DecisionTreeModel":
        try:
            return cls(
                question_id=str(doc["question_id"]),
                n_features=int(doc["n_features"]),
                max_depth=None if doc["max_depth"] is None else int(doc["max_depth"]),
                min_samples_leaf=int(doc["min_samples_leaf"]),
                nodes=[dict(n) for n in doc["nodes"]],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed decision-tree document: {exc}") from exc


def _sse(scores: Sequence[float]) -> float:
    mean = sum(scores) / len(scores)
    return sum((s - mean) ** 2 for s in scores)


def _best_split(
    rows: list[tuple[list[float], float]], min_samples_leaf: int
) -> tuple[int, float] | None:
    """Deterministic exhaustive search: midpoints of consecutive sorted unique
    values per feature, minimizing total within-side squared error; ties break
    to the lowest feature index, then the lowest threshold."""
    n_features = len(rows[0][0])
    best: tuple[float, int, float] | None = None
    for feature in range(n_features):
        values = sorted({vec[feature] for vec, _ in rows})
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            left = [score for vec, score in rows if vec[feature] <= threshold]
            right = [score for vec, score in rows if vec[feature] > threshold]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            cost = _sse(left) + _sse(right)
            if best is None or cost < best[0] - 1e-15:
                best = (cost, feature, threshold)
    if best is None:
        return None
    return best[1], best[2]


def tree_fit(
    vectors: Sequence[ScoringVector],
    scores: Sequence[float],
    *,
    max_depth: int | None = 3,
    min_samples_leaf: int = 1,
) -> DecisionTreeModel:
    """Greedy CART regression on scoring vectors; fully deterministic, leaf
    predictions are training means clamped to [0,1]."""
    if not vectors:
        raise ValidationError("tree_fit needs at least one training sample")
    if len(vectors) != len(scores):
        raise ValidationError(f"{len(vectors)} vectors vs {len(scores)} scores")
    question_id = vectors[0].question_id
    n_features = len(vectors[0].values)
    for v in vectors:
        if v.question_id != question_id:
            raise ValidationError(f"mixed question_ids in training set: {v.question_id} vs {question_id}")
        if len(v.values) != n_features:
            raise ValidationError(f"{v.answer_id}: inconsistent vector length")
    if min_samples_leaf < 1:
        raise ValidationError("min_samples_leaf must be >= 1")

    model = DecisionTreeModel(
        question_id=question_id,
        n_features=n_features,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )
    rows = [(list(v.values), float(s)) for v, s in zip(vectors, scores)]

    def build(rows: list[tuple[list[float], float]], depth: int) -> int:
        ys = [score for _, score in rows]
        pure = max(ys) == min(ys)
        at_depth = max_depth is not None and depth >= max_depth
        split = None
        if not pure and not at_depth and len(rows) >= 2 * min_samples_leaf:
            split = _best_split(rows, min_samples_leaf)
        index = len(model.nodes)
        if split is None:
            # pure leaves predict the common score exactly, not a rounded mean
            prediction = min(1.0, max(0.0, ys[0] if pure else sum(ys) / len(ys)))
            model.nodes.append({"prediction": prediction, "n_train": len(rows)})
            return index
        feature, threshold = split
        model.nodes.append({"feature_index": feature, "split_threshold": threshold, "left": -1, "right": -1})
        left_rows = [r for r in rows if r[0][feature] <= threshold]
        right_rows = [r for r in rows if r[0][feature] > threshold]
        model.nodes[index]["left"] = build(left_rows, depth + 1)
        model.nodes[index]["right"] = build(right_rows, depth + 1)
        return index

    build(rows, 0)
    return model


def tree_decision_path(
    model: DecisionTreeModel, values: Sequence[float]
) -> tuple[float, list[tuple[int, float, str]]]:
    """Root-to-leaf traversal (<= goes left); returns prediction and the path."""
    if len(values) != model.n_features:
        raise ValidationError(
            f"vector has {len(values)} features, model expects {model.n_features}"
        )
    if not model.nodes:
        raise ValidationError("empty decision-tree model")
    path: list[tuple[int, float, str]] = []
    index = 0
    while True:
        node = model.nodes[index]
        if "prediction" in node:
            return float(node["prediction"]), path
        feature, threshold = node["feature_index"], node["split_threshold"]
        if values[feature] <= threshold:
            path.append((feature, threshold, "left"))
            index = node["left"]
        else:
            path.append((feature, threshold, "right"))
            index = node["right"]


def tree_predict(model: DecisionTreeModel, values: Sequence[float]) -> float:
    return tree_decision_path(model, values)[0]


# ---------------------------------------------------------------------------
# explanation assembly


def explain(
    answer_id: str,
    spans: Sequence[JustificationSpan],
    vector: ScoringVector,
    head_kind: str,
    final_score: float,
    *,
    awarded: Sequence[tuple[int, float]] = (),
    tree_path: Sequence[tuple[int, float, str]] | None = None,
) -> GradeExplanation:
    """Assemble the cue evidence, scoring vector, and head outcome for a grade."""
    span_rows = []
    for span in spans:
        span_rows.append(
            (
                span.char_start if span.char_start is not None else span.token_start,
                span.char_end if span.char_end is not None else span.token_end,
                span.matched_item_id if span.matched_item_id is not None else 0,
                span.match_similarity if span.match_similarity is not None else 0.0,
            )
        )
    return GradeExplanation(
        answer_id=answer_id,
        head_kind=head_kind,
        spans=span_rows,
        scoring_vector=list(vector.values),
        awarded=list(awarded),
        final_score=float(final_score),
        tree_path=list(tree_path) if tree_path is not None else None,
    )
