"""Answer corpora, scoring rubrics, and grade explanations.

File formats
------------
Corpus: line-delimited JSON records with fields answer_id, question_id,
language (de|en), question, reference_answer, student_answer, score (in
[0,1]), split (train|dev|test).

Rubrics: one JSON document keyed by question_id; each entry carries
max_points and the ordered items [{key_element, points}]. An optional
top-level "format_version" key is honored.

Explanations (machine): line-delimited records mirroring GradeExplanation
plus format_version "1". The human format is a markdown report with cue
text highlighted and a per-item points table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .artifacts import (
    FORMAT_VERSION,
    atomic_write_text,
    format_float,
    check_version,
    iter_jsonl,
    read_document,
    write_document,
    write_jsonl,
)
from .errors import ValidationError

LANGUAGES = ("de", "en")
SPLITS = ("train", "dev", "test")
HEAD_KINDS = ("summation", "decision_tree")


@dataclass
class AnswerRecord:
    answer_id: str
    question_id: str
    language: str
    question_text: str
    reference_answer: str
    student_answer: str
    score: float
    split: str

    def validate(self) -> None:
        if not self.answer_id:
            raise ValidationError("answer_id must be non-empty")
        if self.language not in LANGUAGES:
            raise ValidationError(f"{self.answer_id}: language {self.language!r} not in {LANGUAGES}")
        if not self.student_answer:
            raise ValidationError(f"{self.answer_id}: empty student_answer")
        if not isinstance(self.score, (int, float)) or not 0.0 <= float(self.score) <= 1.0:
            raise ValidationError(f"{self.answer_id}: score out of range [0,1]: {self.score!r}")
        if self.split not in SPLITS:
            raise ValidationError(f"{self.answer_id}: split {self.split!r} not in {SPLITS}")
        self.score = float(self.score)


@dataclass(frozen=True)
class RubricItem:
    item_id: int
    key_element: str
    points: float

    def validate(self) -> None:
        if not self.key_element:
            raise ValidationError(f"rubric item {self.item_id}: empty key_element")
        if not self.points > 0:
            raise ValidationError(f"rubric item {self.item_id}: points must be > 0, got {self.points!r}")


@dataclass
class Rubric:
    question_id: str
    items: list[RubricItem]
    max_points: float

    def validate(self) -> None:
        if not self.items:
            raise ValidationError(f"rubric {self.question_id}: must have at least one item")
        for item in self.items:
            item.validate()
        top = max(item.points for item in self.items)
        if self.max_points < top:
            raise ValidationError(
                f"rubric {self.question_id}: max_points {self.max_points} below largest item ({top})"
            )

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class GradeExplanation:
    answer_id: str
    head_kind: str
    spans: list[tuple[int, int, int, float]]  # (char_start, char_end, matched_item_id, similarity)
    scoring_vector: list[float]
    awarded: list[tuple[int, float]]  # (item_id, points_awarded)
    final_score: float
    tree_path: list[tuple[int, float, str]] | None = None  # (feature_index, threshold, direction)

    def validate(self, rubric: Rubric | None = None) -> None:
        if self.head_kind not in HEAD_KINDS:
            raise ValidationError(f"{self.answer_id}: unknown head_kind {self.head_kind!r}")
        if not 0.0 <= self.final_score <= 1.0:
            raise ValidationError(f"{self.answer_id}: final_score out of [0,1]: {self.final_score}")
        for value in self.scoring_vector:
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{self.answer_id}: scoring vector entry out of [0,1]: {value}")
        if rubric is not None:
            if len(self.scoring_vector) != len(rubric.items):
                raise ValidationError(
                    f"{self.answer_id}: scoring vector length {len(self.scoring_vector)} "
                    f"!= rubric size {len(rubric.items)}"
                )
            for _, _, item_id, _ in self.spans:
                if not 0 <= item_id < len(rubric.items):
                    raise ValidationError(f"{self.answer_id}: matched_item_id {item_id} out of range")


# ---------------------------------------------------------------------------
# corpus


_CORPUS_FIELDS = (
    "answer_id",
    "question_id",
    "language",
    "question",
    "reference_answer",
    "student_answer",
    "score",
    "split",
)


def load_corpus(path: str | Path) -> list[AnswerRecord]:
    """Load and validate a line-delimited answer corpus, preserving file order."""
    records: list[AnswerRecord] = []
    seen: set[str] = set()
    for lineno, raw in iter_jsonl(path):
        missing = [f for f in _CORPUS_FIELDS if f not in raw]
        if missing:
            raise ValidationError(f"{path}:{lineno}: missing fields {missing}")
        rec = AnswerRecord(
            answer_id=str(raw["answer_id"]),
            question_id=str(raw["question_id"]),
            language=str(raw["language"]),
            question_text=str(raw["question"]),
            reference_answer=str(raw["reference_answer"]),
            student_answer=str(raw["student_answer"]),
            score=raw["score"],
            split=str(raw["split"]),
        )
        try:
            rec.validate()
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        if rec.answer_id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate answer_id {rec.answer_id!r}")
        seen.add(rec.answer_id)
        records.append(rec)
    return records


def write_corpus(records: Sequence[AnswerRecord], path: str | Path) -> int:
    rows = []
    for rec in records:
        rows.append(
            {
                "answer_id": rec.answer_id,
                "question_id": rec.question_id,
                "language": rec.language,
                "question": rec.question_text,
                "reference_answer": rec.reference_answer,
                "student_answer": rec.student_answer,
                "score": rec.score,
                "split": rec.split,
            }
        )
    return write_jsonl(path, rows)


def convert_saf_records(path: str | Path) -> list[AnswerRecord]:
    """Map a JSONL export of the public SAF columns onto AnswerRecord.

    Expected columns: id, question, reference_answer, provided_answer,
    score, max_score, language (de|en), split. Raw point scores are divided
    by max_score so stored scores live in [0,1]. The feedback column is
    deliberately ignored.
    """
    records = []
    for lineno, raw in iter_jsonl(path):
        try:
            max_score = float(raw.get("max_score", 1.0)) or 1.0
            rec = AnswerRecord(
                answer_id=str(raw["id"]),
                question_id=str(raw.get("question_id", raw["question"])),
                language=str(raw.get("language", "en")),
                question_text=str(raw["question"]),
                reference_answer=str(raw.get("reference_answer", "")),
                student_answer=str(raw["provided_answer"]),
                score=float(raw["score"]) / max_score,
                split=str(raw.get("split", "train")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: cannot convert record: {exc}") from exc
        rec.validate()
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# rubrics


def load_rubrics(path: str | Path) -> dict[str, Rubric]:
    """Load the rubric document; every question_id keyed once, items in file order."""
    doc = read_document(path)
    if "format_version" in doc:
        check_version(doc, str(path))
    rubrics: dict[str, Rubric] = {}
    for question_id, entry in doc.items():
        if question_id == "format_version":
            continue
        if not isinstance(entry, dict):
            raise ValidationError(f"{path}: rubric {question_id!r} is not an object")
        items_raw = entry.get("items")
        if not isinstance(items_raw, list) or not items_raw:
            raise ValidationError(f"{path}: rubric {question_id!r} has no items")
        items = []
        for idx, item in enumerate(items_raw):
            try:
                items.append(RubricItem(item_id=idx, key_element=str(item["key_element"]), points=float(item["points"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: rubric {question_id!r} item {idx}: {exc}") from exc
        try:
            rubric = Rubric(question_id=question_id, items=items, max_points=float(entry["max_points"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: rubric {question_id!r}: {exc}") from exc
        rubric.validate()
        if question_id in rubrics:
            raise ValidationError(f"{path}: duplicate question_id {question_id!r}")
        rubrics[question_id] = rubric
    if not rubrics:
        raise ValidationError(f"{path}: no rubrics found")
    return rubrics


def write_rubrics(rubrics: Mapping[str, Rubric], path: str | Path) -> None:
    doc: dict = {"format_version": FORMAT_VERSION}
    for question_id, rubric in rubrics.items():
        doc[question_id] = {
            "max_points": rubric.max_points,
            "items": [{"key_element": it.key_element, "points": it.points} for it in rubric.items],
        }
    write_document(path, doc)


# ---------------------------------------------------------------------------
# explanations


def explanation_to_record(expl: GradeExplanation) -> dict:
    rec: dict = {
        "format_version": FORMAT_VERSION,
        "answer_id": expl.answer_id,
        "head_kind": expl.head_kind,
        "spans": [[int(a), int(b), int(i), float(s)] for a, b, i, s in expl.spans],
        "scoring_vector": [float(v) for v in expl.scoring_vector],
        "awarded": [[int(i), float(p)] for i, p in expl.awarded],
        "final_score": float(expl.final_score),
    }
    if expl.tree_path is not None:
        rec["tree_path"] = [[int(f), float(t), str(d)] for f, t, d in expl.tree_path]
    return rec


def explanation_from_record(rec: dict, where: str) -> GradeExplanation:
    check_version(rec, where)
    try:
        expl = GradeExplanation(
            answer_id=str(rec["answer_id"]),
            head_kind=str(rec["head_kind"]),
            spans=[(int(a), int(b), int(i), float(s)) for a, b, i, s in rec["spans"]],
            scoring_vector=[float(v) for v in rec["scoring_vector"]],
            awarded=[(int(i), float(p)) for i, p in rec["awarded"]],
            final_score=float(rec["final_score"]),
            tree_path=[(int(f), float(t), str(d)) for f, t, d in rec["tree_path"]]
            if "tree_path" in rec
            else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: malformed explanation record: {exc}") from exc
    expl.validate()
    return expl


def render_explanation_markdown(
    expl: GradeExplanation,
    record: AnswerRecord,
    rubric: Rubric,
) -> str:
    """Markdown report for one graded answer with its cue evidence."""
    text = record.student_answer
    highlighted = text
    for start, end, _, _ in sorted(expl.spans, reverse=True):
        highlighted = highlighted[:start] + "==" + highlighted[start:end] + "==" + highlighted[end:]
    lines = [
        f"## Answer `{expl.answer_id}` (question `{record.question_id}`)",
        "",
        f"**Final score:** {format_float(expl.final_score)} ({expl.head_kind} head)",
        "",
        "**Answer with justification cues:**",
        "",
        f"> {highlighted}",
        "",
        "**Detected cues:**",
        "",
    ]
    if expl.spans:
        for start, end, item_id, sim in expl.spans:
            cue = text[start:end]
            key = rubric.items[item_id].key_element
            lines.append(f"- \"{cue}\" -> item {item_id} (\"{key}\"), similarity {format(sim, '.3f')}")
    else:
        lines.append("- none detected")
    awarded_by_item = dict(expl.awarded)
    lines += ["", "| item | key element | similarity | points | awarded |", "| --- | --- | --- | --- | --- |"]
    for item in rubric.items:
        sim = expl.scoring_vector[item.item_id] if item.item_id < len(expl.scoring_vector) else 0.0
        got = awarded_by_item.get(item.item_id, 0.0)
        lines.append(
            f"| {item.item_id} | {item.key_element} | {format(sim, '.3f')} "
            f"| {format_float(item.points)} | {format_float(got)} |"
        )
    if expl.tree_path:
        lines += ["", "**Decision path:**", ""]
        for feature, threshold, direction in expl.tree_path:
            lines.append(f"- value[{feature}] {'<=' if direction == 'left' else '>'} {format_float(threshold)}")
    lines.append("")
    return "\n".join(lines)


def write_explanations(
    explanations: Sequence[GradeExplanation],
    path: str | Path,
    format: str = "machine",
    *,
    corpus: Mapping[str, AnswerRecord] | None = None,
    rubrics: Mapping[str, Rubric] | None = None,
) -> int:
    """Persist explanations; machine is the versioned record stream, human a markdown report."""
    if format == "machine":
        return write_jsonl(path, [explanation_to_record(e) for e in explanations])
    if format == "human":
        if corpus is None or rubrics is None:
            raise ValidationError("human format needs corpus and rubrics for answer text and items")
        parts = ["# Grade explanations", ""]
        for expl in explanations:
            record = corpus[expl.answer_id]
            parts.append(render_explanation_markdown(expl, record, rubrics[record.question_id]))
        atomic_write_text(path, "\n".join(parts))
        return len(explanations)
    raise ValidationError(f"unknown explanation format {format!r}")


def load_explanations(path: str | Path) -> list[GradeExplanation]:
    return [explanation_from_record(rec, f"{path}:{lineno}") for lineno, rec in iter_jsonl(path)]
