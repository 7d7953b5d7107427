"""Word-level tokenizer with character offsets and a deterministic vocabulary."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

PAD, UNK, CLS, SEP = 0, 1, 2, 3
SPECIALS = ["<pad>", "<unk>", "<cls>", "<sep>"]


def tokenize(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass
class Vocab:
    index: dict[str, int]

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        words = sorted({tok.casefold() for text in texts for tok, _, _ in tokenize(text)})
        index = {w: i for i, w in enumerate(SPECIALS + words)}
        return cls(index=index)

    def __len__(self) -> int:
        return len(self.index)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t.casefold(), UNK) for t in tokens]

    def to_doc(self) -> dict:
        return {"words": [w for w in self.index if w not in SPECIALS]}

    @classmethod
    def from_doc(cls, doc: dict) -> "Vocab":
        index = {w: i for i, w in enumerate(SPECIALS + list(doc["words"]))}
        return cls(index=index)
