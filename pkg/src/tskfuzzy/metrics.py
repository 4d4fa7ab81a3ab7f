"""Classification metrics, rank-based ROC-AUC and fold aggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

import numpy as np

from .errors import EmptyList, LengthMismatch, SingleClass

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    counts: ConfusionCounts

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = np.asarray(y_true).ravel()
    p = np.asarray(y_pred).ravel()
    if len(t) != len(p) or len(t) == 0:
        raise LengthMismatch(f"y_true has {len(t)} entries, y_pred has {len(p)}")
    t1, p1 = t == 1, p == 1
    return ConfusionCounts(
        tp=int(np.sum(t1 & p1)), fp=int(np.sum(~t1 & p1)),
        tn=int(np.sum(~t1 & ~p1)), fn=int(np.sum(t1 & ~p1)),
    )


def scalar_metrics(counts: ConfusionCounts) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1); undefined ratios are reported as 0."""
    c = counts
    accuracy = (c.tp + c.tn) / c.n
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, recall, f1


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # start index of each run of equal values
    starts = np.flatnonzero(np.concatenate([[True], xs[1:] != xs[:-1]]))
    ends = np.concatenate([starts[1:], [len(xs)]])
    # mean 1-based rank of positions start..end-1 is (start + end + 1) / 2
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2."""
    y = np.asarray(y_true).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(y) != len(s):
        raise LengthMismatch("labels and scores differ in length")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    u = _average_ranks(s)[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(y_true, probabilities, threshold: float = 0.5) -> MetricsReport:
    p = np.asarray(probabilities, dtype=np.float64)
    counts = confusion(y_true, (p >= threshold).astype(np.int64))
    acc, prec, rec, f1 = scalar_metrics(counts)
    return MetricsReport(acc, prec, rec, f1, roc_auc(y_true, p), counts)


def aggregate_folds(reports: Sequence[MetricsReport]) -> tuple[dict[str, float], dict[str, float]]:
    """Unweighted mean and population std of each metric across folds."""
    if not reports:
        raise EmptyList("no fold reports to aggregate")
    table = np.array([[getattr(r, k) for k in METRIC_NAMES] for r in reports])
    mean = dict(zip(METRIC_NAMES, table.mean(axis=0).tolist()))
    std = dict(zip(METRIC_NAMES, table.std(axis=0).tolist()))
    return mean, std


def render(value: float, places: int = 4) -> str:
    """Fixed-point rendering of the shortest repr, rounding half to even."""
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN))


def write_fold_metrics(reports: Sequence[MetricsReport], path) -> None:
    mean, std = aggregate_folds(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fold",) + METRIC_NAMES)
        for i, r in enumerate(reports, start=1):
            w.writerow([i] + [render(getattr(r, k)) for k in METRIC_NAMES])
        w.writerow(["mean"] + [render(mean[k]) for k in METRIC_NAMES])
        w.writerow(["std"] + [render(std[k]) for k in METRIC_NAMES])
