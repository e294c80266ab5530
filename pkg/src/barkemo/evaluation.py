"""Confusion matrix and the per-class precision / recall / f1 report."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Dict, Sequence, Tuple

import numpy as np

from .data import CLASS_NAMES, N_CLASSES
from .errors import EmptyInput, EmptyMatrix, LabelOutOfRange, LengthMismatch

METRICS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [true, predicted]
    labels: Tuple[str, ...] = CLASS_NAMES

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassificationReport:
    labels: Tuple[str, ...]
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]
    support: Tuple[int, ...]
    accuracy: float
    macro: Dict[str, float]
    weighted: Dict[str, float]
    total: int
    degenerate: Tuple[str, ...] = ()  # classes with a 0/0 metric

    def to_dict(self) -> dict:
        return {
            "classes": {
                name: {"precision": p, "recall": r, "f1": f, "support": s}
                for name, p, r, f, s in zip(self.labels, self.precision, self.recall, self.f1, self.support)
            },
            "accuracy": self.accuracy,
            "macro_avg": dict(self.macro),
            "weighted_avg": dict(self.weighted),
            "total": self.total,
            "degenerate": list(self.degenerate),
        }


def confusion(truths: Sequence[int], preds: Sequence[int], n_classes: int = N_CLASSES) -> ConfusionMatrix:
    t = np.asarray([int(v) for v in truths], dtype=np.int64)
    p = np.asarray([int(v) for v in preds], dtype=np.int64)
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} truths but {len(p)} predictions")
    if len(t) == 0:
        raise EmptyInput("nothing to evaluate")
    if min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes:
        raise LabelOutOfRange(f"class indices must lie in 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    labels = CLASS_NAMES if n_classes == N_CLASSES else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(counts, labels)


def _ratio(num: int, den: int) -> Tuple[Fraction, bool]:
    return (Fraction(num, den), False) if den else (Fraction(0), True)


def build_report(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class metrics plus accuracy, macro and support-weighted averages.

    Any 0/0 ratio is reported as 0 and its class is listed in ``degenerate``.
    Arithmetic is exact (rational) until the final conversion to float.
    """
    counts = np.asarray(cm.counts, dtype=np.int64)
    total = int(counts.sum())
    if total < 1:
        raise EmptyMatrix("confusion matrix has no entries")
    tp = np.diag(counts)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    per_class = {m: [] for m in METRICS}
    degenerate = []
    for c in range(len(tp)):
        p, dp = _ratio(int(tp[c]), int(predicted[c]))
        r, dr = _ratio(int(tp[c]), int(support[c]))
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        per_class["precision"].append(p)
        per_class["recall"].append(r)
        per_class["f1"].append(f)
        if dp or dr or p + r == 0:
            degenerate.append(cm.labels[c])
    n = len(tp)
    macro = {m: float(sum(v) / n) for m, v in per_class.items()}
    weighted = {m: float(sum(int(s) * x for s, x in zip(support, v)) / total) for m, v in per_class.items()}
    return ClassificationReport(
        labels=tuple(cm.labels),
        precision=tuple(float(x) for x in per_class["precision"]),
        recall=tuple(float(x) for x in per_class["recall"]),
        f1=tuple(float(x) for x in per_class["f1"]),
        support=tuple(int(s) for s in support),
        accuracy=float(Fraction(int(tp.sum()), total)),
        macro=macro,
        weighted=weighted,
        total=total,
        degenerate=tuple(degenerate),
    )


def format_metric(x: float) -> str:
    """Two decimals, halves rounded away from zero (0.725 -> '0.73')."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_report(r: ClassificationReport) -> str:
    """Fixed-width text table in the familiar classification-report layout."""
    width = max(len("weighted avg"), *(len(name) for name in r.labels))
    col = 9

    def row(name, *cells):
        return f"{name:>{width}} " + " ".join(f"{c:>{col}}" for c in cells)

    lines = [row("", "precision", "recall", "f1-score", "support"), ""]
    for i, name in enumerate(r.labels):
        lines.append(row(name, format_metric(r.precision[i]), format_metric(r.recall[i]),
                         format_metric(r.f1[i]), r.support[i]))
    lines.append("")
    lines.append(row("accuracy", "", "", format_metric(r.accuracy), r.total))
    for name, avg in (("macro avg", r.macro), ("weighted avg", r.weighted)):
        lines.append(row(name, *(format_metric(avg[m]) for m in METRICS), r.total))
    if r.degenerate:
        lines.append("")
        lines.append("degenerate classes (0/0 reported as 0): " + ", ".join(r.degenerate))
    return "\n".join(lines) + "\n"


def report_from_predictions(truths, preds) -> ClassificationReport:
    return build_report(confusion(truths, preds))
