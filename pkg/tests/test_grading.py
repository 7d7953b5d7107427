import random

import pytest

from cuegrade.artifacts import dumps_compact
from cuegrade.corpus import Rubric, RubricItem
from cuegrade.errors import ValidationError
from cuegrade.grading import (
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
    tree_predict,
)
from cuegrade.labeling import annotate_answer
from cuegrade.similarity import embed_score
from cuegrade.spans import JustificationSpan, assign_span_to_rubric

from support import one_hot_over
from test_weak import make_record, make_rubric


def rubric_of(points, question_id="q1"):
    rubric = Rubric(
        question_id=question_id,
        items=[RubricItem(i, f"element {i}", p) for i, p in enumerate(points)],
        max_points=1.0,
    )
    rubric.validate()
    return rubric


def vec(values, question_id="q1", strategy="fuzzy", answer_id="a"):
    return ScoringVector(answer_id=answer_id, question_id=question_id, values=values, strategy=strategy)


# ---------------------------------------------------------------------------
# scoring vectors


def _fixture(text, elements):
    answer = annotate_answer(make_record("a1", text))
    rubric_ann = make_rubric(elements)
    table = one_hot_over(
        [t.text for t in answer.tokens],
        *[[t.text for t in toks] for toks in rubric_ann.item_tokens],
    )
    return answer, rubric_ann, table


def test_fuzzy_no_spans_zero_vector():
    answer, rubric_ann, table = _fixture("aa bb cc", ["aa bb", "cc dd"])
    vector = scoring_vector_fuzzy([], answer, rubric_ann, table)
    assert vector.values == [0.0, 0.0]
    assert vector.strategy == "fuzzy"


def test_fuzzy_identity_span():
    answer, rubric_ann, table = _fixture("aa bb. unrelated stuff", ["aa bb", "qq rr"])
    span = JustificationSpan("a1", 0, 2, 1.0)
    vector = scoring_vector_fuzzy([span], answer, rubric_ann, table)
    assert vector.values[0] == pytest.approx(1.0)
    assert vector.values[1] == 0.0


def test_fuzzy_takes_max_over_spans():
    answer, rubric_ann, table = _fixture(
        "aa bb cc dd ee. aa bb zz yy xx", ["aa bb cc dd ee"]
    )
    strong = JustificationSpan("a1", 0, 5, 1.0)  # verbatim
    weak = JustificationSpan("a1", 6, 11, 1.0)  # 2 of 5 tokens shared
    only_weak = scoring_vector_fuzzy([weak], answer, rubric_ann, table)
    both = scoring_vector_fuzzy([weak, strong], answer, rubric_ann, table)
    assert both.values[0] == pytest.approx(1.0)
    assert only_weak.values[0] < both.values[0]


def test_fuzzy_brute_force_and_hard_bound_random():
    rng = random.Random(41)
    vocab = [f"t{i}" for i in range(8)]
    for _ in range(120):
        words = [rng.choice(vocab) for _ in range(rng.randint(4, 12))]
        answer = annotate_answer(make_record("a1", " ".join(words)))
        elements = [
            " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 4)))
            for _ in range(rng.randint(1, 3))
        ]
        rubric_ann = make_rubric(elements)
        table = one_hot_over(
            [t.text for t in answer.tokens],
            *[[t.text for t in toks] for toks in rubric_ann.item_tokens],
        )
        spans = []
        for _ in range(rng.randint(0, 3)):
            start = rng.randrange(0, len(answer.tokens))
            end = rng.randint(start + 1, len(answer.tokens))
            spans.append(JustificationSpan("a1", start, end, 1.0))

        fuzzy = scoring_vector_fuzzy(spans, answer, rubric_ann, table)
        # independent oracle: direct max over spans of embed F1
        for item_id, item_tokens in enumerate(rubric_ann.item_tokens):
            want = 0.0
            for s in spans:
                f1 = embed_score(
                    answer.tokens[s.token_start : s.token_end], item_tokens, table
                ).f1
                want = max(want, f1)
            assert fuzzy.values[item_id] == pytest.approx(want, abs=1e-12)

        for s in spans:
            assignment = assign_span_to_rubric(s, answer, rubric_ann, table)
            s.matched_item_id = assignment.item_id
            s.match_similarity = assignment.similarity
        hard = scoring_vector_hard(spans, rubric_ann.rubric, answer_id="a1")
        assert all(h <= f + 1e-12 for h, f in zip(hard.values, fuzzy.values))


def test_hard_per_item_max():
    rubric = rubric_of([0.5, 0.25, 0.25])
    spans = [
        JustificationSpan("a", 0, 2, 1.0, matched_item_id=1, match_similarity=0.4),
        JustificationSpan("a", 3, 5, 1.0, matched_item_id=1, match_similarity=0.9),
    ]
    assert scoring_vector_hard(spans, rubric, answer_id="a").values == [0.0, 0.9, 0.0]


def test_hard_empty_and_saturated():
    rubric = rubric_of([0.5, 0.5])
    assert scoring_vector_hard([], rubric, answer_id="a").values == [0.0, 0.0]
    spans = [
        JustificationSpan("a", 0, 1, 1.0, matched_item_id=0, match_similarity=1.0),
        JustificationSpan("a", 1, 2, 1.0, matched_item_id=1, match_similarity=1.0),
    ]
    assert scoring_vector_hard(spans, rubric, answer_id="a").values == [1.0, 1.0]


def test_hard_requires_assignments():
    rubric = rubric_of([1.0])
    with pytest.raises(ValidationError):
        scoring_vector_hard([JustificationSpan("a", 0, 1, 1.0)], rubric, answer_id="a")


# ---------------------------------------------------------------------------
# summation head


def test_summation_hand_fixture():
    rubric = rubric_of([0.5, 0.25, 0.25])
    grade = summation_grade(vec([0.6, 0.4, 0.9]), rubric, SummationParams(0.5))
    assert grade == 0.75


def test_summation_zero_vector():
    rubric = rubric_of([0.5, 0.5])
    assert summation_grade(vec([0.0, 0.0]), rubric, SummationParams()) == 0.0


def test_summation_clamped_at_one():
    rubric = Rubric(
        question_id="q1",
        items=[RubricItem(0, "x", 0.8), RubricItem(1, "y", 0.8)],
        max_points=1.0,
    )
    assert summation_grade(vec([1.0, 1.0]), rubric, SummationParams()) == 1.0


def test_summation_strict_threshold_and_monotonicity():
    rubric = rubric_of([0.5, 0.25, 0.25])
    params = SummationParams(0.5)
    assert summation_grade(vec([0.5, 0.5, 0.5]), rubric, params) == 0.0  # strict >
    base = summation_grade(vec([0.6, 0.4, 0.9]), rubric, params)
    raised = summation_grade(vec([0.6, 0.7, 0.9]), rubric, params)
    assert raised >= base
    # values strictly below threshold never matter
    assert summation_grade(vec([0.6, 0.1, 0.9]), rubric, params) == base


def test_summation_rejects_bad_max_points():
    rubric = rubric_of([0.5])
    rubric.max_points = 0.0
    with pytest.raises(ValidationError):
        summation_grade(vec([1.0]), rubric, SummationParams())


def test_summation_awarded_items():
    rubric = rubric_of([0.5, 0.25, 0.25])
    awarded = summation_awarded(vec([0.6, 0.4, 0.9]), rubric, SummationParams(0.5))
    assert awarded == [(0, 0.5), (2, 0.25)]


# ---------------------------------------------------------------------------
# decision trees


def test_single_sample_single_leaf():
    model = tree_fit([vec([0.3, 0.4])], [0.625])
    assert len(model.nodes) == 1
    assert tree_predict(model, [0.9, 0.9]) == 0.625


def test_separable_fixture_root_split():
    model = tree_fit([vec([1.0, 0.0]), vec([0.0, 0.0])], [1.0, 0.0])
    root = model.nodes[0]
    assert root["feature_index"] == 0
    assert root["split_threshold"] == 0.5
    assert tree_predict(model, [1.0, 0.0]) == 1.0
    assert tree_predict(model, [0.0, 0.0]) == 0.0


def test_boundary_input_routes_left():
    model = tree_fit([vec([1.0]), vec([0.0])], [1.0, 0.0])
    assert tree_predict(model, [0.5]) == 0.0  # exactly at threshold: left


def test_unbounded_depth_interpolates_distinct_vectors():
    rng = random.Random(59)
    for _ in range(40):
        n = rng.randint(1, 20)
        seen = set()
        vectors, scores = [], []
        while len(vectors) < n:
            values = tuple(round(rng.random(), 3) for _ in range(3))
            if values in seen:
                continue
            seen.add(values)
            vectors.append(vec(list(values)))
            scores.append(rng.random())
        model = tree_fit(vectors, scores, max_depth=None, min_samples_leaf=1)
        for v, s in zip(vectors, scores):
            assert tree_predict(model, v.values) == pytest.approx(s, abs=1e-12)


def test_constant_features_single_leaf():
    model = tree_fit([vec([0.5, 0.5]), vec([0.5, 0.5])], [0.0, 1.0])
    assert len(model.nodes) == 1
    assert tree_predict(model, [0.5, 0.5]) == 0.5


def test_serialization_roundtrip_bit_exact():
    rng = random.Random(61)
    vectors = [vec([rng.random(), rng.random()]) for _ in range(12)]
    scores = [rng.random() for _ in vectors]
    model = tree_fit(vectors, scores)
    blob = dumps_compact(model.to_doc())
    back = DecisionTreeModel.from_doc(model.to_doc())
    assert dumps_compact(back.to_doc()) == blob
    reparsed = DecisionTreeModel.from_doc(__import__("json").loads(blob))
    assert dumps_compact(reparsed.to_doc()) == blob


def test_training_run_invariant():
    rng = random.Random(67)
    vectors = [vec([rng.random(), rng.random(), rng.random()]) for _ in range(15)]
    scores = [rng.random() for _ in vectors]
    blobs = {dumps_compact(tree_fit(vectors, scores).to_doc()) for _ in range(3)}
    assert len(blobs) == 1


def test_tree_fit_validation():
    with pytest.raises(ValidationError):
        tree_fit([], [])
    with pytest.raises(ValidationError):
        tree_fit([vec([0.1]), vec([0.2], question_id="other")], [0.1, 0.2])
    with pytest.raises(ValidationError):
        tree_predict(tree_fit([vec([0.1, 0.2])], [0.5]), [0.1])


def test_max_depth_limits_tree():
    rng = random.Random(71)
    vectors = [vec([i / 16]) for i in range(16)]
    scores = [rng.random() for _ in vectors]
    model = tree_fit(vectors, scores, max_depth=1)
    internal = [n for n in model.nodes if "feature_index" in n]
    assert len(internal) == 1


def test_min_samples_leaf_respected():
    vectors = [vec([i / 4]) for i in range(4)]
    model = tree_fit(vectors, [0.0, 0.1, 0.9, 1.0], max_depth=None, min_samples_leaf=2)
    for node in model.nodes:
        if "prediction" in node:
            assert node["n_train"] >= 2


# ---------------------------------------------------------------------------
# explanations


def test_explain_summation_awarded_items():
    rubric = rubric_of([0.5, 0.25, 0.25])
    vector = vec([0.6, 0.4, 0.9])
    params = SummationParams(0.5)
    final = summation_grade(vector, rubric, params)
    expl = explain(
        "a1", [], vector, "summation", final, awarded=summation_awarded(vector, rubric, params)
    )
    assert [i for i, _ in expl.awarded] == [0, 2]
    assert expl.final_score == 0.75
    assert expl.tree_path is None


def test_explain_zero_vector_path():
    rubric = rubric_of([1.0])
    vector = vec([0.0])
    final = summation_grade(vector, rubric, SummationParams())
    expl = explain("a1", [], vector, "summation", final, awarded=[])
    assert expl.spans == [] and expl.final_score == 0.0


def test_explain_tree_head_includes_path():
    model = tree_fit([vec([1.0, 0.0]), vec([0.0, 0.0])], [1.0, 0.0])
    prediction, path = tree_decision_path(model, [1.0, 0.0])
    expl = explain("a1", [], vec([1.0, 0.0]), "decision_tree", prediction, tree_path=path)
    assert expl.tree_path == [(0, 0.5, "right")]
    assert expl.final_score == 1.0
