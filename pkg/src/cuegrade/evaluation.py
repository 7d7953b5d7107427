"""Scoring and tagging metrics: RMSE, token-level macro P/R/F1, the 9-class
score report on the 0.125 grid, task-metric summaries per grade class, and
Pearson correlation for the rubric-length analysis."""

from __future__ import annotations

import math
from typing import Sequence

from scipy.special import betainc

from .errors import ValidationError
from .spans import TaskMetrics

NINE_CLASS_GRID = tuple(i / 8 for i in range(9))


def rmse(pred: Sequence[float], gold: Sequence[float]) -> float:
    if len(pred) != len(gold) or not pred:
        raise ValidationError(f"rmse needs equal non-empty lengths, got {len(pred)} vs {len(gold)}")
    return math.sqrt(sum((p - g) ** 2 for p, g in zip(pred, gold)) / len(pred))


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def token_macro_prf(
    probs: Sequence[float], silver: Sequence[float], threshold: float = 0.5
) -> tuple[float, float, float]:
    """Binarize both sides strictly above the threshold; macro-average the
    cue and non-cue classes."""
    if len(probs) != len(silver) or not probs:
        raise ValidationError("token metrics need equal non-empty lengths")
    pred = [p > threshold for p in probs]
    gold = [s > threshold for s in silver]
    per_class = []
    for positive in (True, False):
        tp = sum(1 for p, g in zip(pred, gold) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(pred, gold) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(pred, gold) if p != positive and g == positive)
        per_class.append(_prf(tp, fp, fn))
    precision = sum(c[0] for c in per_class) / 2
    recall = sum(c[1] for c in per_class) / 2
    f1 = sum(c[2] for c in per_class) / 2
    return precision, recall, f1


def nine_class_index(value: float) -> int:
    """Nearest point of {0, 0.125, ..., 1.0}; exact midpoints round up."""
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"score out of [0,1]: {value}")
    return min(8, int(math.floor(value * 8 + 0.5)))


def nine_class_report(pred: Sequence[float], gold: Sequence[float]) -> tuple[float, float, float]:
    """(accuracy, macro-F1 over all 9 classes, weighted-F1 by gold support)."""
    if len(pred) != len(gold) or not pred:
        raise ValidationError("nine-class report needs equal non-empty lengths")
    p_cls = [nine_class_index(v) for v in pred]
    g_cls = [nine_class_index(v) for v in gold]
    n = len(g_cls)
    accuracy = sum(1 for p, g in zip(p_cls, g_cls) if p == g) / n
    f1s = []
    supports = []
    for c in range(9):
        tp = sum(1 for p, g in zip(p_cls, g_cls) if p == c and g == c)
        fp = sum(1 for p, g in zip(p_cls, g_cls) if p == c and g != c)
        fn = sum(1 for p, g in zip(p_cls, g_cls) if p != c and g == c)
        f1s.append(_prf(tp, fp, fn)[2])
        supports.append(tp + fn)
    macro_f1 = sum(f1s) / 9
    weighted_f1 = sum(f * s for f, s in zip(f1s, supports)) / n
    return accuracy, macro_f1, weighted_f1


GRADE_CLASSES = ("correct", "partial", "incorrect")


def grade_class(score: float) -> str:
    if score == 1.0:
        return "correct"
    if score == 0.0:
        return "incorrect"
    return "partial"


def class_grouped_task_metrics(
    reports: Sequence[TaskMetrics], gold_scores: Sequence[float]
) -> dict[str, dict[str, float]]:
    """Mean of every task-metric field per final grade class; empty classes
    are absent from the result."""
    if len(reports) != len(gold_scores):
        raise ValidationError("task metric grouping needs one gold score per report")
    groups: dict[str, list[TaskMetrics]] = {}
    for report, score in zip(reports, gold_scores):
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"gold score out of [0,1]: {score}")
        groups.setdefault(grade_class(score), []).append(report)
    out = {}
    for cls in GRADE_CLASSES:
        members = groups.get(cls)
        if not members:
            continue
        n = len(members)
        out[cls] = {
            "num_cues": sum(m.num_cues for m in members) / n,
            "avg_tokens_per_cue": sum(m.avg_tokens_per_cue for m in members) / n,
            "pct_cue_tokens": sum(m.pct_cue_tokens for m in members) / n,
            "n": n,
        }
    return out


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson r with a two-sided p-value from the t-distribution with
    n-2 degrees of freedom (regularized incomplete beta)."""
    n = len(x)
    if n != len(y) or n < 3:
        raise ValidationError(f"pearson needs equal lengths >= 3, got {len(x)} and {len(y)}")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("undefined correlation: constant series")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = df * r * r / (1.0 - r * r)
    p = float(betainc(df / 2.0, 0.5, df / (df + t2)))
    return r, p
