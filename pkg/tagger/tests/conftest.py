"""Shared fixture: a primary-pipeline workdir built over the bundled micro
corpus. The tagger consumes the pipeline only through these files."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest


def micro_path(name: str) -> Path:
    import importlib.resources as resources

    return Path(str(resources.files("cuegrade.data").joinpath(f"micro/{name}")))


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return micro_path("corpus.jsonl")


@pytest.fixture(scope="session")
def rubrics_path() -> Path:
    return micro_path("rubrics.json")


@pytest.fixture(scope="session")
def primary_workdir(tmp_path_factory, corpus_path, rubrics_path) -> Path:
    workdir = tmp_path_factory.mktemp("primary")
    for stage in ("annotate", "silver"):
        subprocess.run(
            [
                sys.executable,
                "-m",
                "cuegrade.cli",
                stage,
                "--corpus",
                str(corpus_path),
                "--rubrics",
                str(rubrics_path),
                "--workdir",
                str(workdir),
                "--quiet",
            ],
            check=True,
        )
    return workdir


@pytest.fixture(scope="session")
def silver_path(primary_workdir) -> Path:
    return primary_workdir / "silver.jsonl"
