"""File interfaces shared with the grading pipeline.

The tagger talks to the pipeline exclusively through files: it reads the
corpus, rubric, and silver-label formats and writes the tagger interchange
and contextual-embedding formats. Floats are serialized with 9 significant
digits and writes are temp-then-rename, mirroring the pipeline's
conventions so reruns are byte-comparable.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Iterable

FORMAT_VERSION = "1"


class DataError(ValueError):
    pass


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise DataError(f"non-finite float: {x!r}")
    s = format(float(x), ".9g")
    if not any(c in s for c in ".e"):
        s += ".0"
    return s


def _encode(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(k, ensure_ascii=False) + ":" + _encode(v) for k, v in obj.items()) + "}"
    raise DataError(f"unserializable {type(obj).__name__}")


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    lines = [_encode(r) for r in records]
    atomic_write(path, "".join(line + "\n" for line in lines))
    return len(lines)


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


def read_corpus(path: str | Path) -> list[dict]:
    records = read_jsonl(path)
    for rec in records:
        for field in ("answer_id", "question_id", "language", "question",
                      "reference_answer", "student_answer", "score", "split"):
            if field not in rec:
                raise DataError(f"{path}: corpus record missing {field!r}")
    return records


def read_silver(path: str | Path) -> dict[str, tuple[list[float], list[tuple[int, int]]]]:
    """answer_id -> (per-token probs, per-token char spans)."""
    out = {}
    for rec in read_jsonl(path):
        if rec.get("format_version") != FORMAT_VERSION:
            raise DataError(f"{path}: unknown silver format_version {rec.get('format_version')!r}")
        if "token_spans" not in rec:
            raise DataError(f"{path}: silver record lacks token_spans; regenerate with the pipeline")
        probs = [float(p) for p in rec["probs"]]
        spans = [(int(s), int(e)) for s, e in rec["token_spans"]]
        if len(probs) != len(spans):
            raise DataError(f"{path}: probs/token_spans length mismatch for {rec.get('answer_id')!r}")
        out[str(rec["answer_id"])] = (probs, spans)
    return out


def read_rubrics(path: str | Path) -> dict[str, list[str]]:
    """question_id -> ordered key elements."""
    doc = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(doc, dict):
        raise DataError(f"{path}: rubric document is not an object")
    out = {}
    for question_id, entry in doc.items():
        if question_id == "format_version":
            continue
        items = entry.get("items") if isinstance(entry, dict) else None
        if not items:
            raise DataError(f"{path}: rubric {question_id!r} has no items")
        out[question_id] = [str(item["key_element"]) for item in items]
    return out


def interchange_record(answer_id: str, spans: list[tuple[int, int, float]], model_id: str) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "answer_id": answer_id,
        "model_id": model_id,
        "spans": [
            {"char_start": int(s), "char_end": int(e), "prob": float(p)} for s, e, p in spans
        ],
    }


def write_embeddings(
    path: str | Path,
    dim: int,
    model_id: str,
    records: Iterable[tuple[str, list[tuple[int, int, list[float]]]]],
) -> int:
    rows = [{"format_version": FORMAT_VERSION, "dim": int(dim), "model_id": model_id}]
    n = 0
    for record_id, spans in records:
        rows.append(
            {
                "record_id": record_id,
                "spans": [
                    {"char_start": int(s), "char_end": int(e), "vector": [float(v) for v in vec]}
                    for s, e, vec in spans
                ],
            }
        )
        n += 1
    atomic_write(path, "".join(_encode(r) + "\n" for r in rows))
    return n
