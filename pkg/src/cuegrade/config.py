"""Pipeline configuration: JSON config file plus CLI flag overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .artifacts import read_document
from .errors import ValidationError
from .labeling import AGGREGATION_METHODS, FUNCTION_IDS

WORKDIR_ENV = "CUEGRADE_WORKDIR"


@dataclass
class PipelineConfig:
    corpus: str | None = None
    rubrics: str | None = None
    embeddings: str | None = None  # static table or contextual export; one-hot fallback if unset
    preannotations: str | None = None
    external_probs: str | None = None  # tagger interchange file for the spans stage
    workdir: str = field(default_factory=lambda: os.environ.get(WORKDIR_ENV, "work"))
    language: str | None = None  # optional corpus filter
    split_coordination: bool = True
    default_soft_threshold: float = 0.5
    soft_thresholds: dict[str, float] = field(default_factory=dict)
    aggregator: str = "hmm"
    hmm_iterations: int = 4
    span_threshold: float = 0.5
    scoring_strategy: str = "fuzzy"
    head: str = "decision_tree"
    summation_threshold: float = 0.5
    tree_max_depth: int | None = 3
    tree_min_samples_leaf: int = 1
    eval_split: str = "test"
    figures: bool = True

    def validate(self) -> None:
        for name in ("default_soft_threshold", "span_threshold", "summation_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"config {name} out of [0,1]: {value}")
        for func_id, value in self.soft_thresholds.items():
            if func_id not in FUNCTION_IDS:
                raise ValidationError(f"config soft_thresholds names unknown function {func_id!r}")
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"config threshold for {func_id} out of [0,1]: {value}")
        if self.aggregator not in ("hmm",) + AGGREGATION_METHODS:
            raise ValidationError(f"unknown aggregator {self.aggregator!r}")
        if self.scoring_strategy not in ("fuzzy", "hard"):
            raise ValidationError(f"unknown scoring strategy {self.scoring_strategy!r}")
        if self.head not in ("summation", "decision_tree"):
            raise ValidationError(f"unknown head {self.head!r}")
        if self.language is not None and self.language not in ("de", "en"):
            raise ValidationError(f"unknown language filter {self.language!r}")
        if self.eval_split not in ("train", "dev", "test", "all"):
            raise ValidationError(f"unknown eval split {self.eval_split!r}")
        if self.hmm_iterations < 0:
            raise ValidationError("hmm_iterations must be >= 0")

    def workpath(self, name: str) -> Path:
        return Path(self.workdir) / name


_CONFIG_KEYS = {f.name for f in fields(PipelineConfig)}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from an optional JSON file and explicit overrides."""
    data: dict = {}
    if path is not None:
        doc = read_document(path)
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        data.update(doc)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"unknown config override {key!r}")
        data[key] = value
    cfg = PipelineConfig(**data)
    cfg.validate()
    return cfg
