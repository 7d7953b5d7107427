"""Pairwise text-similarity measures, all mapped into [0,1].

Sequence measures operate on comparison-key sequences (see token_view);
embedding measures operate on annotated tokens plus an EmbeddingTable.
Conventions chosen here and relied on by the labeling functions:

* ngram_overlap is precision against the candidate, rouge_n is recall
  against the reference.
* bleu uses add-1 smoothing on each n-gram precision so short phrases do
  not collapse to zero whenever one order has no match.
* meteor_lite is METEOR without synonym/paraphrase tables, with the
  canonical parameters alpha=0.9, beta=3, gamma=0.5.
* embed_score clamps negative cosines to 0, applies no IDF weighting and
  no baseline rescaling, and skips stopword tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .annotate import AnnotatedToken
from .errors import ValidationError

Key = Hashable
Seq = Sequence[Key]


# ---------------------------------------------------------------------------
# token views


def token_view(
    tokens: Sequence[AnnotatedToken],
    view: str = "surface",
    *,
    drop_stopwords: bool = False,
    drop_punct: bool = True,
) -> tuple[str, ...]:
    """Comparison-key sequence for a token list; surface keys are casefolded."""
    out = []
    for tok in tokens:
        if drop_punct and tok.pos == "PUNCT":
            continue
        if drop_stopwords and tok.is_stopword:
            continue
        if view == "surface":
            out.append(tok.text.casefold())
        elif view == "lemma":
            out.append(tok.lemma)
        elif view == "stem":
            out.append(tok.stem)
        else:
            raise ValidationError(f"unknown token view {view!r}")
    return tuple(out)


# ---------------------------------------------------------------------------
# n-gram measures


def _ngrams(seq: Seq, n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(seq) - n + 1):
        g = tuple(seq[i : i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def _clipped_matches(cand: dict[tuple, int], ref: dict[tuple, int]) -> int:
    return sum(min(c, ref.get(g, 0)) for g, c in cand.items())


def ngram_overlap(cand: Seq, ref: Seq, n: int) -> float:
    """Multiset n-gram precision of the candidate; 0 when cand has < n tokens."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if len(cand) < n:
        return 0.0
    cand_grams = _ngrams(cand, n)
    total = sum(cand_grams.values())
    return _clipped_matches(cand_grams, _ngrams(ref, n)) / total


def rouge_n(cand: Seq, ref: Seq, n: int) -> float:
    """Multiset n-gram recall against the reference; 0 when ref has < n tokens."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if len(ref) < n:
        return 0.0
    ref_grams = _ngrams(ref, n)
    total = sum(ref_grams.values())
    return _clipped_matches(_ngrams(cand, n), ref_grams) / total


def _lcs_length(a: Seq, b: Seq) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(cand: Seq, ref: Seq) -> float:
    """LCS F1; 0 when there is no common subsequence (or an empty side)."""
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def bleu(cand: Seq, ref: Seq, max_n: int = 4) -> float:
    """Smoothed BLEU: geometric mean of add-1 clipped precisions for
    n = 1..min(max_n, |cand|), times the brevity penalty."""
    if not cand:
        return 0.0
    orders = min(max_n, len(cand))
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand_grams = _ngrams(cand, n)
        matched = _clipped_matches(cand_grams, _ngrams(ref, n))
        total = sum(cand_grams.values())
        log_sum += math.log((matched + 1) / (total + 1))
    geo = math.exp(log_sum / orders)
    bp = math.exp(1 - len(ref) / len(cand)) if len(cand) < len(ref) else 1.0
    return geo * bp


# ---------------------------------------------------------------------------
# METEOR (lite)


def _greedy_stage(
    cand: Seq,
    ref: Seq,
    cand_free: list[bool],
    ref_free: list[bool],
    pairs: dict[int, int],
) -> None:
    # Prefer the ref position that continues the previous chunk, else the
    # leftmost free one; keeps the alignment deterministic and chunk-light.
    for i in range(len(cand)):
        if not cand_free[i]:
            continue
        choices = [j for j in range(len(ref)) if ref_free[j] and ref[j] == cand[i]]
        if not choices:
            continue
        prev = pairs.get(i - 1)
        j = prev + 1 if prev is not None and (prev + 1) in choices else choices[0]
        pairs[i] = j
        cand_free[i] = False
        ref_free[j] = False


def _count_chunks(pairs: dict[int, int]) -> int:
    chunks = 0
    prev_i = prev_j = None
    for i in sorted(pairs):
        j = pairs[i]
        if prev_i is None or i != prev_i + 1 or j != prev_j + 1:
            chunks += 1
        prev_i, prev_j = i, j
    return chunks


def meteor_lite(
    cand: Seq,
    ref: Seq,
    cand_stems: Seq | None = None,
    ref_stems: Seq | None = None,
) -> float:
    """Unigram alignment by exact match then stem match; harmonic mean with
    recall weight 0.9 and a cubed chunk penalty scaled by 0.5."""
    if not cand or not ref:
        return 0.0
    cand_free = [True] * len(cand)
    ref_free = [True] * len(ref)
    pairs: dict[int, int] = {}
    _greedy_stage(cand, ref, cand_free, ref_free, pairs)
    if cand_stems is not None and ref_stems is not None:
        _greedy_stage(cand_stems, ref_stems, cand_free, ref_free, pairs)
    m = len(pairs)
    if m == 0:
        return 0.0
    p = m / len(cand)
    r = m / len(ref)
    fmean = p * r / (0.9 * p + 0.1 * r)
    penalty = 0.5 * (_count_chunks(pairs) / m) ** 3
    return fmean * (1 - penalty)


# ---------------------------------------------------------------------------
# set / edit measures


def jaccard(cand: Seq, ref: Seq) -> float:
    """Set Jaccard; both-empty convention is 1."""
    a, b = set(cand), set(ref)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def edit_similarity(cand: Seq, ref: Seq) -> float:
    """1 - Levenshtein(cand, ref) / max length, unit costs; both-empty is 1."""
    if not cand and not ref:
        return 1.0
    prev = list(range(len(ref) + 1))
    for i, x in enumerate(cand, start=1):
        cur = [i]
        for j, y in enumerate(ref, start=1):
            cost = 0 if x == y else 1
            cur.append(min(prev[j - 1] + cost, prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return 1.0 - prev[-1] / max(len(cand), len(ref))


# ---------------------------------------------------------------------------
# embeddings


class EmbedScore(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool


@dataclass
class EmbeddingTable:
    """Token vectors for the BERTScore-style matcher.

    Static tables key by surface form (exact, then casefolded); contextual
    exports key by (record_id, token_index). Missing keys resolve to the
    designated zero vector.
    """

    source: str  # "static_table" | "contextual_export"
    dim: int
    vectors: dict
    model_id: str | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError(f"embedding dimension must be > 0, got {self.dim}")
        self._zero = np.zeros(self.dim)

    @classmethod
    def one_hot(cls, vocab: Iterable[str]) -> "EmbeddingTable":
        words = sorted({w.casefold() for w in vocab})
        if not words:
            raise ValidationError("one-hot table needs a non-empty vocabulary")
        dim = len(words)
        vectors = {}
        for i, w in enumerate(words):
            v = np.zeros(dim)
            v[i] = 1.0
            vectors[w] = v
        return cls(source="static_table", dim=dim, vectors=vectors)

    @classmethod
    def from_static_file(cls, path: str | Path) -> "EmbeddingTable":
        lines = Path(path).read_text("utf-8").splitlines()
        if not lines or not lines[0].startswith("dim "):
            raise ValidationError(f"{path}: static table must start with a 'dim d' header")
        try:
            dim = int(lines[0].split()[1])
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"{path}: bad dim header {lines[0]!r}") from exc
        vectors = {}
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValidationError(f"{path}:{lineno}: expected word + {dim} floats")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        return cls(source="static_table", dim=dim, vectors=vectors)

    @classmethod
    def from_contextual_file(
        cls,
        path: str | Path,
        token_spans: Mapping[str, Sequence[tuple[int, int]]],
    ) -> "EmbeddingTable":
        """Map per-character-span vectors onto artifact tokens by maximum overlap."""
        from .artifacts import check_version, iter_jsonl  # local import to avoid a cycle

        path = Path(path)
        rows = iter_jsonl(path)
        try:
            _, header = next(rows)
        except StopIteration:
            raise ValidationError(f"{path}: empty contextual export") from None
        check_version(header, f"{path}:1")
        try:
            dim = int(header["dim"])
            model_id = str(header["model_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:1: bad header: {exc}") from exc
        vectors: dict = {}
        for lineno, rec in rows:
            record_id = rec.get("record_id")
            spans = rec.get("spans")
            if not isinstance(record_id, str) or not isinstance(spans, list):
                raise ValidationError(f"{path}:{lineno}: record needs record_id and spans")
            if record_id not in token_spans:
                continue  # vectors for records outside this run are ignored
            parsed = []
            for s in spans:
                vec = np.asarray(s["vector"], dtype=float)
                if vec.shape != (dim,):
                    raise ValidationError(f"{path}:{lineno}: vector length != header dim {dim}")
                parsed.append((int(s["char_start"]), int(s["char_end"]), vec))
            for idx, (tok_start, tok_end) in enumerate(token_spans[record_id]):
                best_vec = None
                best_overlap = 0
                for s_start, s_end, vec in parsed:
                    overlap = min(tok_end, s_end) - max(tok_start, s_start)
                    if overlap > best_overlap:
                        best_overlap = overlap
                        best_vec = vec
                if best_vec is not None:
                    vectors[(record_id, idx)] = best_vec
        return cls(source="contextual_export", dim=dim, vectors=vectors, model_id=model_id)

    def lookup(self, surface: str, record: str | None = None, index: int | None = None) -> np.ndarray:
        if self.source == "contextual_export":
            if record is None or index is None:
                return self._zero
            return self.vectors.get((record, index), self._zero)
        hit = self.vectors.get(surface)
        if hit is None:
            hit = self.vectors.get(surface.casefold())
        return hit if hit is not None else self._zero


def _prep_embedded(
    tokens: Sequence[AnnotatedToken | str],
    table: EmbeddingTable,
    record: str | None,
    base: int,
) -> np.ndarray | None:
    rows = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, str):
            surface, stop = tok, False
        else:
            surface, stop = tok.text, tok.is_stopword
        if stop:
            continue
        rows.append(table.lookup(surface, record, base + i))
    if not rows:
        return None
    return np.stack(rows)


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.outer(na, nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(denom > 0, (a @ b.T) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sims, 0.0, 1.0)


def embed_score(
    cand: Sequence[AnnotatedToken | str],
    ref: Sequence[AnnotatedToken | str],
    table: EmbeddingTable,
    *,
    cand_record: str | None = None,
    ref_record: str | None = None,
    cand_base: int = 0,
    ref_base: int = 0,
) -> EmbedScore:
    """Greedy-max cosine matching over non-stopword tokens (precision over the
    candidate rows, recall over the reference columns)."""
    a = _prep_embedded(cand, table, cand_record, cand_base)
    b = _prep_embedded(ref, table, ref_record, ref_base)
    if a is None or b is None:
        return EmbedScore(0.0, 0.0, 0.0, True)
    sims = _cosine_matrix(a, b)
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    degenerate = not (np.any(a) and np.any(b))
    return EmbedScore(precision, recall, f1, degenerate)


def word_alignment_coverage(
    cand: Sequence[AnnotatedToken | str],
    ref: Sequence[AnnotatedToken | str],
    table: EmbeddingTable,
    *,
    cand_record: str | None = None,
    ref_record: str | None = None,
    cand_base: int = 0,
    ref_base: int = 0,
) -> float:
    """Greedy one-to-one alignment; pair score is 1 on lemma equality, else the
    clamped cosine; pairs under 0.5 stay unaligned. Returns covered ref share."""
    if not ref:
        return 1.0
    if not cand:
        return 0.0

    def lemma_of(tok):
        return tok if isinstance(tok, str) else tok.lemma

    cand_vecs = np.stack(
        [table.lookup(t if isinstance(t, str) else t.text, cand_record, cand_base + i) for i, t in enumerate(cand)]
    )
    ref_vecs = np.stack(
        [table.lookup(t if isinstance(t, str) else t.text, ref_record, ref_base + j) for j, t in enumerate(ref)]
    )
    sims = _cosine_matrix(cand_vecs, ref_vecs)
    scores = sims.copy()
    for i, ct in enumerate(cand):
        for j, rt in enumerate(ref):
            if lemma_of(ct) == lemma_of(rt):
                scores[i, j] = 1.0

    cand_used = [False] * len(cand)
    ref_used = [False] * len(ref)
    aligned = 0
    while True:
        best = (0.0, -1, -1)
        for i in range(len(cand)):
            if cand_used[i]:
                continue
            for j in range(len(ref)):
                if ref_used[j]:
                    continue
                s = scores[i, j]
                if s > best[0] + 1e-15:
                    best = (s, i, j)
        score, i, j = best
        if i < 0 or score < 0.5:
            break
        cand_used[i] = True
        ref_used[j] = True
        aligned += 1
    return aligned / len(ref)
