"""Training and export: token classification on soft labels, QA-style span
prediction against rubric items, and contextual embedding export."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .encoding import CLS, PAD, SEP, Vocab, tokenize
from .io import (
    DataError,
    interchange_record,
    read_corpus,
    read_rubrics,
    read_silver,
    write_embeddings,
    write_jsonl,
)
from .model import (
    BUILTIN_MODEL,
    EncoderConfig,
    SpanPointer,
    TokenTagger,
    resolve_model_name,
    seed_everything,
)

logger = logging.getLogger("cuetagger")

TOKEN_EXPORT = "token_probs.jsonl"
SPAN_EXPORT = "span_probs.jsonl"
EMBEDDINGS_EXPORT = "embeddings.jsonl"


def rubric_record_key(question_id: str, item_index: int) -> str:
    return f"rubric::{question_id}::{item_index}"


# ---------------------------------------------------------------------------
# alignment


def soft_labels_for_tokens(
    tokens: Sequence[tuple[str, int, int]],
    silver_probs: Sequence[float],
    silver_spans: Sequence[tuple[int, int]],
) -> list[float]:
    """Character-aligned soft label per tagger token: overlap-weighted average
    of the silver per-token probabilities."""
    labels = []
    for _, t_start, t_end in tokens:
        t_len = t_end - t_start
        weighted = 0.0
        for (s_start, s_end), prob in zip(silver_spans, silver_probs):
            overlap = min(t_end, s_end) - max(t_start, s_start)
            if overlap > 0:
                weighted += overlap * prob
        labels.append(min(1.0, weighted / t_len))
    return labels


@dataclass
class TokenExample:
    answer_id: str
    split: str
    ids: list[int]
    # answer-token bookkeeping: position in ids, char span, soft label
    answer_positions: list[int]
    char_spans: list[tuple[int, int]]
    labels: list[float]


def build_token_examples(
    corpus: list[dict],
    silver: dict,
    vocab: Vocab,
    *,
    context: bool,
    max_len: int,
) -> tuple[list[TokenExample], int]:
    examples = []
    skipped = 0
    for rec in corpus:
        answer_id = rec["answer_id"]
        text = rec["student_answer"]
        tokens = tokenize(text)
        if not tokens:
            skipped += 1
            continue
        if answer_id in silver:
            probs, spans = silver[answer_id]
            if spans and (spans[-1][1] > len(text) or len(spans) == 0):
                logger.warning("silver offsets exceed answer text for %s; skipped", answer_id)
                skipped += 1
                continue
            labels = soft_labels_for_tokens(tokens, probs, spans)
        else:
            labels = [0.0] * len(tokens)  # unlabeled answers are export-only

        prefix = [CLS]
        if context:
            ref_tokens = tokenize(rec["reference_answer"])
            prefix += vocab.encode([t for t, _, _ in ref_tokens]) + [SEP]
        ids = prefix + vocab.encode([t for t, _, _ in tokens])
        if len(ids) > max_len:
            keep = max_len - len(prefix)
            if keep <= 0:
                logger.warning("context longer than max_len for %s; skipped", answer_id)
                skipped += 1
                continue
            tokens = tokens[:keep]
            labels = labels[:keep]
            ids = ids[: max_len]
        offset = len(prefix)
        examples.append(
            TokenExample(
                answer_id=answer_id,
                split=rec["split"],
                ids=ids,
                answer_positions=list(range(offset, offset + len(tokens))),
                char_spans=[(s, e) for _, s, e in tokens],
                labels=labels,
            )
        )
    return examples, skipped


def _batches(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i : i + size]


def _pad_token_batch(batch: list[TokenExample]):
    width = max(len(ex.ids) for ex in batch)
    ids = torch.full((len(batch), width), PAD, dtype=torch.long)
    pad_mask = torch.ones((len(batch), width), dtype=torch.bool)
    label = torch.zeros((len(batch), width))
    weight = torch.zeros((len(batch), width))
    for i, ex in enumerate(batch):
        ids[i, : len(ex.ids)] = torch.tensor(ex.ids)
        pad_mask[i, : len(ex.ids)] = False
        for pos, y in zip(ex.answer_positions, ex.labels):
            label[i, pos] = y
            weight[i, pos] = 1.0
    return ids, pad_mask, label, weight


# ---------------------------------------------------------------------------
# token classifier


def train_token_classifier(
    corpus_path: str | Path,
    silver_path: str | Path,
    workdir: str | Path,
    *,
    context: bool = False,
    epochs: int = 1,
    model_name: str = BUILTIN_MODEL,
    hard_labels: bool = False,
    batch_size: int = 8,
    lr: float = 3e-3,
    seed: int = 0,
    export_splits: tuple[str, ...] = ("dev", "test"),
) -> dict:
    """Fine-tune the token head on silver soft labels and export dev/test
    probabilities in the interchange format."""
    seed_everything(seed)
    corpus = read_corpus(corpus_path)
    silver = read_silver(silver_path)
    vocab = Vocab.build(
        [r["student_answer"] for r in corpus if r["split"] == "train"]
        + ([r["reference_answer"] for r in corpus if r["split"] == "train"] if context else [])
    )
    config = EncoderConfig(vocab_size=len(vocab))
    examples, skipped = build_token_examples(corpus, silver, vocab, context=context, max_len=config.max_len)

    model = TokenTagger(config)
    train_set = [ex for ex in examples if ex.split == "train" and ex.answer_id in silver]
    if not train_set:
        raise DataError("no trainable answers: train split and silver labels do not intersect")
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    losses = []
    model.train()
    for _ in range(max(1, epochs)):
        for batch in _batches(train_set, batch_size):
            ids, pad_mask, label, weight = _pad_token_batch(batch)
            logits = model(ids, pad_mask)
            probs = torch.sigmoid(logits)
            if hard_labels:
                target = (label > 0.5).float()
                raw = nn.functional.binary_cross_entropy(probs, target, reduction="none")
            else:
                raw = (probs - label) ** 2
            loss = (raw * weight).sum() / weight.sum()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))

    model_id = f"{model_name}+ctx" if context else model_name
    resolve_model_name(model_name)

    model.eval()
    records = []
    exported = 0
    with torch.no_grad():
        for ex in examples:
            if ex.split not in export_splits:
                continue
            ids, pad_mask, _, _ = _pad_token_batch([ex])
            probs = torch.sigmoid(model(ids, pad_mask))[0]
            spans = [
                (start, end, float(min(1.0, max(0.0, probs[pos]))))
                for pos, (start, end) in zip(ex.answer_positions, ex.char_spans)
            ]
            records.append(interchange_record(ex.answer_id, spans, model_id))
            exported += 1

    workdir = Path(workdir)
    export_path = workdir / TOKEN_EXPORT
    write_jsonl(export_path, records)
    checkpoint = workdir / f"token_{'ctx' if context else 'plain'}.pt"
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"state": model.state_dict(), "config": config.to_doc(), "vocab": vocab.to_doc(), "model_id": model_id},
        checkpoint,
    )
    return {
        "task": "token_classification",
        "model_id": model_id,
        "trained_on": len(train_set),
        "exported": exported,
        "skipped": skipped,
        "final_loss": losses[-1] if losses else None,
        "export": str(export_path),
        "checkpoint": str(checkpoint),
    }


# ---------------------------------------------------------------------------
# span predictor


def silver_char_spans(
    probs: Sequence[float], spans: Sequence[tuple[int, int]], threshold: float = 0.5
) -> list[tuple[int, int]]:
    """Character spans of maximal runs with probability strictly above 0.5."""
    runs = []
    start = None
    for i, p in enumerate(list(probs) + [0.0]):
        if p > threshold and start is None:
            start = i
        elif (i == len(probs) or p <= threshold) and start is not None:
            runs.append((spans[start][0], spans[i - 1][1]))
            start = None
    return runs


def _containment_f1(a: str, b: str) -> float:
    ta = {t.casefold() for t, _, _ in tokenize(a)}
    tb = {t.casefold() for t, _, _ in tokenize(b)}
    if not ta or not tb:
        return 0.0
    p = len(ta & tb) / len(ta)
    r = len(ta & tb) / len(tb)
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class SpanExample:
    answer_id: str
    split: str
    ids: list[int]
    answer_offset: int
    tokens: list[tuple[str, int, int]]
    item_index: int
    target: tuple[int, int] | None  # token indices within the answer segment


def build_span_examples(
    corpus: list[dict],
    silver: dict,
    rubrics: dict[str, list[str]],
    vocab: Vocab,
    max_len: int,
) -> tuple[list[SpanExample], int]:
    examples = []
    skipped = 0
    for rec in corpus:
        answer_id = rec["answer_id"]
        items = rubrics.get(rec["question_id"])
        if not items:
            raise DataError(f"no rubric for question {rec['question_id']!r}")
        text = rec["student_answer"]
        tokens = tokenize(text)
        if not tokens:
            skipped += 1
            continue

        # best silver span per rubric item (train targets)
        targets: dict[int, tuple[int, int]] = {}
        if answer_id in silver:
            probs, spans = silver[answer_id]
            for c_start, c_end in silver_char_spans(probs, spans):
                span_text = text[c_start:c_end]
                sims = [_containment_f1(span_text, item) for item in items]
                best_item = max(range(len(items)), key=lambda i: (sims[i], -i))
                if sims[best_item] > 0 and best_item not in targets:
                    targets[best_item] = (c_start, c_end)

        for item_index, item in enumerate(items):
            item_ids = vocab.encode([t for t, _, _ in tokenize(item)])
            prefix = [CLS] + item_ids + [SEP]
            ids = prefix + vocab.encode([t for t, _, _ in tokens])
            if len(ids) > max_len:
                keep = max_len - len(prefix)
                if keep <= 0:
                    skipped += 1
                    continue
                answer_tokens = tokens[:keep]
                ids = ids[:max_len]
            else:
                answer_tokens = tokens

            target = None
            if item_index in targets:
                c_start, c_end = targets[item_index]
                covered = [
                    i for i, (_, s, e) in enumerate(answer_tokens) if min(e, c_end) > max(s, c_start)
                ]
                if covered:
                    target = (covered[0], covered[-1])
            examples.append(
                SpanExample(
                    answer_id=answer_id,
                    split=rec["split"],
                    ids=ids,
                    answer_offset=len(prefix),
                    tokens=answer_tokens,
                    item_index=item_index,
                    target=target,
                )
            )
    return examples, skipped


def train_span_predictor(
    corpus_path: str | Path,
    silver_path: str | Path,
    rubrics_path: str | Path,
    workdir: str | Path,
    *,
    epochs: int = 1,
    model_name: str = BUILTIN_MODEL,
    batch_size: int = 8,
    lr: float = 3e-3,
    seed: int = 0,
    export_splits: tuple[str, ...] = ("dev", "test"),
) -> dict:
    """QA-style span predictor: input is rubric item + answer; targets come
    from the silver spans assigned to their best-matching item."""
    seed_everything(seed)
    corpus = read_corpus(corpus_path)
    silver = read_silver(silver_path)
    rubrics = read_rubrics(rubrics_path)
    vocab = Vocab.build(
        [r["student_answer"] for r in corpus if r["split"] == "train"]
        + [item for items in rubrics.values() for item in items]
    )
    config = EncoderConfig(vocab_size=len(vocab))
    examples, skipped = build_span_examples(corpus, silver, rubrics, vocab, config.max_len)

    model = SpanPointer(config)
    train_set = [ex for ex in examples if ex.split == "train" and ex.target is not None]
    if not train_set:
        raise DataError("no span targets found in the train split")
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    model.train()
    for _ in range(max(1, epochs)):
        for batch in _batches(train_set, batch_size):
            width = max(len(ex.ids) for ex in batch)
            ids = torch.full((len(batch), width), PAD, dtype=torch.long)
            pad_mask = torch.ones((len(batch), width), dtype=torch.bool)
            start_t = torch.zeros(len(batch), dtype=torch.long)
            end_t = torch.zeros(len(batch), dtype=torch.long)
            for i, ex in enumerate(batch):
                ids[i, : len(ex.ids)] = torch.tensor(ex.ids)
                pad_mask[i, : len(ex.ids)] = False
                start_t[i] = ex.answer_offset + ex.target[0]
                end_t[i] = ex.answer_offset + ex.target[1]
            start_logits, end_logits = model(ids, pad_mask)
            neg = torch.where(pad_mask, torch.full_like(start_logits, -1e9), torch.zeros_like(start_logits))
            loss = nn.functional.cross_entropy(start_logits + neg, start_t) + nn.functional.cross_entropy(
                end_logits + neg, end_t
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    model_id = f"{model_name}+span"
    resolve_model_name(model_name)

    # one record per (answer, rubric item); duplicates across items are kept
    model.eval()
    records = []
    exported = 0
    with torch.no_grad():
        for ex in examples:
            if ex.split not in export_splits:
                continue
            ids = torch.tensor([ex.ids])
            pad_mask = torch.zeros_like(ids, dtype=torch.bool)
            start_logits, end_logits = model(ids, pad_mask)
            lo = ex.answer_offset
            hi = len(ex.ids)
            s_log = start_logits[0, lo:hi]
            e_log = end_logits[0, lo:hi]
            best = None
            for s in range(len(s_log)):
                for e in range(s, len(e_log)):
                    score = float(s_log[s] + e_log[e])
                    if best is None or score > best[0]:
                        best = (score, s, e)
            _, s_tok, e_tok = best
            char_start = ex.tokens[s_tok][1]
            char_end = ex.tokens[e_tok][2]
            records.append(
                interchange_record(ex.answer_id, [(char_start, char_end, 1.0)], model_id)
            )
            exported += 1

    workdir = Path(workdir)
    export_path = workdir / SPAN_EXPORT
    write_jsonl(export_path, records)
    checkpoint = workdir / "span.pt"
    torch.save(
        {"state": model.state_dict(), "config": config.to_doc(), "vocab": vocab.to_doc(), "model_id": model_id},
        checkpoint,
    )
    return {
        "task": "span_prediction",
        "model_id": model_id,
        "trained_on": len(train_set),
        "exported": exported,
        "skipped": skipped,
        "export": str(export_path),
        "checkpoint": str(checkpoint),
    }


# ---------------------------------------------------------------------------
# contextual embeddings


def export_embeddings(
    corpus_path: str | Path,
    workdir: str | Path,
    *,
    rubrics_path: str | Path | None = None,
    model_name: str = BUILTIN_MODEL,
    checkpoint: str | Path | None = None,
    seed: int = 0,
) -> dict:
    """Per answer (and optionally per rubric item), one vector per token char
    span from the encoder's hidden states. Inference determinism is pinned by
    seeding and single-threaded execution."""
    seed_everything(seed)
    corpus = read_corpus(corpus_path)
    rubrics = read_rubrics(rubrics_path) if rubrics_path else {}

    if checkpoint is not None:
        saved = torch.load(checkpoint, map_location="cpu", weights_only=False)
        config = EncoderConfig.from_doc(saved["config"])
        vocab = Vocab.from_doc(saved["vocab"])
        tagger = TokenTagger(config)
        tagger.load_state_dict(saved["state"])
        encoder = tagger.encoder
        model_id = f"{saved['model_id']}+emb"
    else:
        vocab = Vocab.build(
            [r["student_answer"] for r in corpus]
            + [item for items in rubrics.values() for item in items]
        )
        config = EncoderConfig(vocab_size=len(vocab))
        encoder = TokenTagger(config).encoder
        model_id = f"{model_name}+emb"
        resolve_model_name(model_name)

    encoder.eval()

    def vectors_for(text: str):
        tokens = tokenize(text)[: config.max_len - 1]
        if not tokens:
            return []
        ids = torch.tensor([[CLS] + vocab.encode([t for t, _, _ in tokens])])
        pad_mask = torch.zeros_like(ids, dtype=torch.bool)
        with torch.no_grad():
            hidden = encoder(ids, pad_mask)[0, 1:]
        return [
            (start, end, [float(v) for v in hidden[i]])
            for i, (_, start, end) in enumerate(tokens)
        ]

    records = []
    for rec in corpus:
        records.append((rec["answer_id"], vectors_for(rec["student_answer"])))
    question_order = []
    for rec in corpus:
        if rec["question_id"] not in question_order:
            question_order.append(rec["question_id"])
    for question_id in question_order:
        for item_index, item in enumerate(rubrics.get(question_id, [])):
            records.append((rubric_record_key(question_id, item_index), vectors_for(item)))

    export_path = Path(workdir) / EMBEDDINGS_EXPORT
    n = write_embeddings(export_path, config.dim, model_id, records)
    return {
        "task": "embedding_export",
        "model_id": model_id,
        "records": n,
        "dim": config.dim,
        "export": str(export_path),
    }
