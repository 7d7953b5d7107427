from __future__ import annotations

import importlib.resources as resources
from pathlib import Path

import pytest

MICRO_CORPUS = Path(str(resources.files("cuegrade.data").joinpath("micro/corpus.jsonl")))
MICRO_RUBRICS = Path(str(resources.files("cuegrade.data").joinpath("micro/rubrics.json")))


@pytest.fixture(scope="session")
def micro_corpus_path() -> Path:
    return MICRO_CORPUS


@pytest.fixture(scope="session")
def micro_rubrics_path() -> Path:
    return MICRO_RUBRICS
