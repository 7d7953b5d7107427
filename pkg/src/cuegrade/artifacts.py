"""Versioned persistence for every intermediate pipeline artifact.

All files are UTF-8. Record-stream artifacts are line-delimited JSON, single
documents are one JSON object. Floats are serialized with 9 significant
digits so that write -> load -> write is a byte-level fixpoint, and all
writes go through a temp-file-then-rename so reruns overwrite atomically.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import FormatVersionError, MissingArtifactError, ValidationError

FORMAT_VERSION = "1"


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError(f"non-finite float cannot be serialized: {x!r}")
    s = format(float(x), ".9g")
    if not any(c in s for c in ".e"):
        s += ".0"
    return s


def _encode(obj: Any) -> str:
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
        items = []
        for k, v in obj.items():
            if not isinstance(k, str):
                raise ValidationError(f"non-string JSON key: {k!r}")
            items.append(json.dumps(k, ensure_ascii=False) + ":" + _encode(v))
        return "{" + ",".join(items) + "}"
    raise ValidationError(f"unserializable value of type {type(obj).__name__}")


def dumps_compact(obj: Any) -> str:
    """Deterministic compact JSON with 9-significant-digit floats."""
    return _encode(obj)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    lines = [dumps_compact(r) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def write_document(path: str | Path, doc: dict) -> None:
    atomic_write_text(path, dumps_compact(doc) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record); raises ValidationError naming bad lines."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(rec, dict):
                raise ValidationError(f"{path}:{lineno}: record is not an object")
            yield lineno, rec


def _reject_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise ValidationError(f"duplicate key {key!r}")
        seen.add(key)
    return dict(pairs)


def read_document(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON document: {exc}") from exc
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: document is not an object")
    return doc


def check_version(doc: dict, where: str) -> None:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"{where}: unknown format_version {version!r} (expected {FORMAT_VERSION!r})")


def require_artifact(path: str | Path, stage_hint: str = "") -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, stage_hint)
    return path
