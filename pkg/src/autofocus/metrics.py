"""Accuracy, macro F1 and the metrics CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np


@dataclass
class MetricsRow:
    split: str
    question_type: str
    sport: str
    accuracy: float
    macro_f1: float
    count: int


def accuracy(gold: Sequence[int], pred: Sequence[int]) -> float:
    gold, pred = np.asarray(gold), np.asarray(pred)
    if gold.size == 0:
        raise ValueError("accuracy of an empty split")
    return float(np.mean(gold == pred))


def macro_f1(gold: Sequence[int], pred: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over the classes present in ``gold``."""
    gold, pred = np.asarray(gold), np.asarray(pred)
    if gold.size == 0:
        raise ValueError("macro F1 of an empty split")
    scores = []
    for c in np.unique(gold):
        tp = np.sum((pred == c) & (gold == c))
        fp = np.sum((pred == c) & (gold != c))
        fn = np.sum((pred != c) & (gold == c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def breakdown(split: str, gold: Sequence[int], pred: Sequence[int], qtypes: Sequence[str],
              sports: Sequence[str]) -> list[MetricsRow]:
    """Overall row, then one row per question type, then one per sport."""
    gold, pred = np.asarray(gold), np.asarray(pred)
    qtypes, sports = np.asarray(qtypes), np.asarray(sports)
    rows = [MetricsRow(split, "all", "all", accuracy(gold, pred), macro_f1(gold, pred), int(gold.size))]
    for qt in sorted(set(qtypes.tolist())):
        m = qtypes == qt
        rows.append(MetricsRow(split, qt, "all", accuracy(gold[m], pred[m]), macro_f1(gold[m], pred[m]), int(m.sum())))
    for sp in sorted(set(sports.tolist())):
        m = sports == sp
        rows.append(MetricsRow(split, "all", sp, accuracy(gold[m], pred[m]), macro_f1(gold[m], pred[m]), int(m.sum())))
    return rows


_FIELDS = [f.name for f in fields(MetricsRow)]


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        d = asdict(r)
        d["accuracy"] = repr(float(r.accuracy))
        d["macro_f1"] = repr(float(r.macro_f1))
        writer.writerow(d)
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricsRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [MetricsRow(r["split"], r["question_type"], r["sport"], float(r["accuracy"]),
                       float(r["macro_f1"]), int(r["count"])) for r in reader]
