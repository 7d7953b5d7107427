import json
import os
from pathlib import Path

import pytest

from cuegrade.cli import main

CHAIN = ["annotate", "silver", "spans", "score-vectors", "train-head", "grade", "evaluate"]


def run(args):
    return main([str(a) for a in args])


def run_chain(corpus, rubrics, workdir, extra=()):
    for stage in CHAIN:
        code = run([stage, "--corpus", corpus, "--rubrics", rubrics, "--workdir", workdir, "--quiet", *extra])
        assert code == 0, f"stage {stage} failed"


def workdir_bytes(workdir):
    out = {}
    for path in sorted(Path(workdir).rglob("*")):
        if path.is_file():
            out[str(path.relative_to(workdir))] = path.read_bytes()
    return out


# ---------------------------------------------------------------------------


def test_full_chain_and_artifacts(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    run_chain(micro_corpus_path, micro_rubrics_path, w)
    for name in (
        "annotations.jsonl",
        "silver.jsonl",
        "votes.jsonl",
        "hmm_params.json",
        "spans.jsonl",
        "vectors.jsonl",
        "model.json",
        "explanations.jsonl",
        "report.json",
        "report.txt",
    ):
        assert (w / name).exists(), name
    for name in ("scores_scatter.png", "nine_class_confusion.png", "task_metrics_by_class.png"):
        assert (w / "figures" / name).exists(), name

    silver_lines = (w / "silver.jsonl").read_text("utf-8").splitlines()
    assert len(silver_lines) == 24  # one record per answer
    for line in silver_lines:
        rec = json.loads(line)
        assert all(0.0 <= p <= 1.0 for p in rec["probs"])
        assert len(rec["token_spans"]) == len(rec["probs"])

    grades = [json.loads(l)["final_score"] for l in (w / "explanations.jsonl").read_text().splitlines()]
    assert len(grades) == 24 and all(0.0 <= g <= 1.0 for g in grades)

    report = json.loads((w / "report.json").read_text("utf-8"))
    assert report["split"] == "test"
    assert set(report["per_question"]) == {"q_photo", "q_wasser"}
    assert report["rubric_length_correlation"]["weighted_f1"] is None  # needs >= 3 questions
    assert "note" in report["rubric_length_correlation"]


def test_reruns_are_byte_identical(tmp_path, micro_corpus_path, micro_rubrics_path):
    w1, w2 = tmp_path / "w1", tmp_path / "w2"
    run_chain(micro_corpus_path, micro_rubrics_path, w1)
    run_chain(micro_corpus_path, micro_rubrics_path, w2)
    files1, files2 = workdir_bytes(w1), workdir_bytes(w2)
    assert files1.keys() == files2.keys()
    for name in files1:
        assert files1[name] == files2[name], f"{name} differs between runs"


def test_rerun_single_stage_overwrites_atomically(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w, "--quiet"]
    assert run(["annotate", *base]) == 0
    before = (w / "annotations.jsonl").read_bytes()
    assert run(["annotate", *base]) == 0
    assert (w / "annotations.jsonl").read_bytes() == before
    assert not list(w.glob("*.tmp"))


def test_missing_prerequisite_exits_2(tmp_path, micro_corpus_path, micro_rubrics_path, capsys):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w]
    assert run(["spans", *base]) == 2
    assert "annotations.jsonl" in capsys.readouterr().err
    assert run(["annotate", "--quiet", *base]) == 0
    assert run(["spans", *base]) == 2
    assert "silver.jsonl" in capsys.readouterr().err


def test_grade_summation_without_train_head(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w, "--quiet"]
    for stage in ("annotate", "silver", "spans", "score-vectors"):
        assert run([stage, *base]) == 0
    assert run(["grade", "--head", "summation", *base]) == 0
    grades = [
        json.loads(l)["final_score"]
        for l in (w / "explanations.jsonl").read_text("utf-8").splitlines()
    ]
    assert all(0.0 <= g <= 1.0 for g in grades)
    heads = {json.loads(l)["head_kind"] for l in (w / "explanations.jsonl").read_text().splitlines()}
    assert heads == {"summation"}


def test_grade_tree_missing_model_exits_2(tmp_path, micro_corpus_path, micro_rubrics_path, capsys):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w, "--quiet"]
    for stage in ("annotate", "silver", "spans", "score-vectors"):
        assert run([stage, *base]) == 0
    assert run(["grade", "--head", "decision_tree", *base]) == 2
    assert "model.json" in capsys.readouterr().err


def test_unknown_corpus_path_exits_2(tmp_path, micro_rubrics_path):
    code = run(["annotate", "--corpus", tmp_path / "nope.jsonl", "--rubrics", micro_rubrics_path,
                "--workdir", tmp_path / "w"])
    assert code == 2


def test_inspect_prints_markdown(tmp_path, micro_corpus_path, micro_rubrics_path, capsys):
    w = tmp_path / "w"
    run_chain(micro_corpus_path, micro_rubrics_path, w)
    code = run(["inspect", "p01", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w])
    assert code == 0
    out = capsys.readouterr().out
    assert "Answer `p01`" in out
    assert "Final score" in out


def test_inspect_unknown_answer_exits_2(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    run_chain(micro_corpus_path, micro_rubrics_path, w)
    assert run(["inspect", "ghost", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w]) == 2


def test_config_file_with_flag_override(tmp_path, micro_corpus_path, micro_rubrics_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "corpus": str(micro_corpus_path),
                "rubrics": str(micro_rubrics_path),
                "workdir": str(tmp_path / "from_config"),
                "aggregator": "max",
            }
        ),
        encoding="utf-8",
    )
    override = tmp_path / "override"
    assert run(["annotate", "--config", config, "--workdir", override, "--quiet"]) == 0
    assert (override / "annotations.jsonl").exists()
    assert not (tmp_path / "from_config").exists()


def test_unknown_config_key_exits_2(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"corpsu": "typo"}), encoding="utf-8")
    assert run(["annotate", "--config", config]) == 2
    assert "corpsu" in capsys.readouterr().err


def test_workdir_env_default(tmp_path, micro_corpus_path, micro_rubrics_path, monkeypatch):
    env_dir = tmp_path / "via_env"
    monkeypatch.setenv("CUEGRADE_WORKDIR", str(env_dir))
    assert run(["annotate", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--quiet"]) == 0
    assert (env_dir / "annotations.jsonl").exists()


def test_language_filter(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    assert run(["annotate", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path,
                "--workdir", w, "--language", "de", "--quiet"]) == 0
    ids = {json.loads(l)["answer_id"] for l in (w / "annotations.jsonl").read_text().splitlines()}
    assert all(i.startswith("w") for i in ids) and len(ids) == 12


def test_simple_aggregator_pipeline(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w, "--quiet"]
    assert run(["annotate", *base]) == 0
    assert run(["silver", "--aggregator", "max", *base]) == 0
    assert not (w / "hmm_params.json").exists()
    for line in (w / "silver.jsonl").read_text("utf-8").splitlines():
        assert all(0.0 <= p <= 1.0 for p in json.loads(line)["probs"])


def test_external_probs_feed_spans(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    base = ["--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path, "--workdir", w, "--quiet"]
    assert run(["annotate", *base]) == 0
    records = []
    for line in (w / "annotations.jsonl").read_text("utf-8").splitlines():
        rec = json.loads(line)
        spans = []
        for t in rec["tokens"][:3]:
            spans.append({"char_start": t[7], "char_end": t[8], "prob": 0.9})
        records.append(
            {"format_version": "1", "answer_id": rec["answer_id"], "model_id": "stub", "spans": spans}
        )
    external = tmp_path / "external.jsonl"
    external.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    assert run(["spans", "--external-probs", external, *base]) == 0
    rows = [json.loads(l) for l in (w / "spans.jsonl").read_text("utf-8").splitlines()]
    assert all(r["provenance"] == "external" for r in rows)
    assert all(r["model_id"] == "stub" for r in rows)
    assert all(len(r["spans"]) >= 1 for r in rows)


def test_convert_saf_subcommand(tmp_path):
    source = tmp_path / "saf.jsonl"
    source.write_text(
        json.dumps(
            {
                "id": "s1",
                "question": "What is X?",
                "reference_answer": "X is y.",
                "provided_answer": "X is y indeed.",
                "score": 1.0,
                "max_score": 2.0,
                "language": "en",
                "split": "train",
            }
        )
        + "\n",
        encoding="utf-8",
    )
    target = tmp_path / "corpus.jsonl"
    assert run(["convert-saf", source, target, "--quiet"]) == 0
    assert json.loads(target.read_text("utf-8"))["score"] == 0.5


def test_preannotations_flow_through_annotate(tmp_path, micro_corpus_path, micro_rubrics_path):
    from cuegrade.corpus import load_corpus

    first = load_corpus(micro_corpus_path)[0]
    from cuegrade.annotate import tokenize

    lines = [f"# {first.answer_id}"]
    for text, start, end in tokenize(first.student_answer):
        lines.append(f"{text}\t{text.lower()}\tNOUN\tdep_x\t{start}\t{end}")
    pre = tmp_path / "pre.tsv"
    pre.write_text("\n".join(lines) + "\n", encoding="utf-8")
    w = tmp_path / "w"
    assert run([
        "annotate", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path,
        "--workdir", w, "--preannotations", pre, "--quiet",
    ]) == 0
    rows = {json.loads(l)["answer_id"]: json.loads(l) for l in (w / "annotations.jsonl").read_text().splitlines()}
    deps = {tok[4] for tok in rows[first.answer_id]["tokens"]}
    assert deps == {"dep_x"}  # external layer overrode the fallback
    other = next(a for a in rows if a != first.answer_id)
    assert {tok[4] for tok in rows[other]["tokens"]} == {"∅"}


def test_evaluate_dev_split(tmp_path, micro_corpus_path, micro_rubrics_path):
    w = tmp_path / "w"
    run_chain(micro_corpus_path, micro_rubrics_path, w)
    assert run([
        "evaluate", "--corpus", micro_corpus_path, "--rubrics", micro_rubrics_path,
        "--workdir", w, "--split", "dev", "--no-figures", "--quiet",
    ]) == 0
    report = json.loads((w / "report.json").read_text("utf-8"))
    assert report["split"] == "dev" and report["n_answers"] == 4
