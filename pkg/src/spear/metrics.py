"""Binary classification metrics: confusion counts, point metrics, AUROC and AUPR."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from spear.errors import DataError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float
    aupr: float
    threshold: float = DEFAULT_THRESHOLD
    roc_points: list = field(default_factory=list)
    pr_points: list = field(default_factory=list)
    undefined: dict = field(default_factory=dict)  # metric name -> reason it is NaN

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        """Metrics JSON document with a fixed key order; NaN becomes null."""
        def num(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        out = {
            "n": self.n,
            "threshold": self.threshold,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "accuracy": num(self.accuracy),
            "precision": num(self.precision),
            "recall": num(self.recall),
            "f1": num(self.f1),
            "auroc": num(self.auroc),
            "aupr": num(self.aupr),
        }
        if self.undefined:
            out["undefined"] = dict(sorted(self.undefined.items()))
        return out


METRICS_SCHEMA = {
    "type": "object",
    "required": ["n", "threshold", "confusion", "accuracy", "precision", "recall", "f1", "auroc", "aupr"],
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "threshold": {"type": "number"},
        "confusion": {
            "type": "object",
            "required": ["tp", "fp", "tn", "fn"],
            "properties": {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "tn", "fn")},
            "additionalProperties": False,
        },
        **{k: {"type": ["number", "null"], "minimum": 0, "maximum": 1}
           for k in ("accuracy", "precision", "recall", "f1", "auroc", "aupr")},
        "undefined": {"type": "object", "additionalProperties": {"type": "string"}},
    },
    "additionalProperties": False,
}


def _inputs(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"scores and labels must be 1-D of equal length ({s.shape} vs {y.shape})")
    if np.any((y != 0) & (y != 1)):
        raise DataError("labels must be binary")
    return s, y.astype(np.int64)


def confusion(scores, labels, threshold=DEFAULT_THRESHOLD) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with a positive prediction iff score >= threshold."""
    s, y = _inputs(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return tp, fp, tn, fn


def point_metrics(counts) -> dict:
    tp, fp, tn, fn = counts
    total = tp + fp + tn + fn
    if total == 0:
        raise DataError("no samples")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / total, "precision": precision, "recall": recall, "f1": f1}


def _tie_groups(s, y):
    # descending score order; positives/negatives counted per distinct score
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    starts = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
    pos = np.add.reduceat(y_sorted, starts)
    neg = np.add.reduceat(1 - y_sorted, starts)
    return pos, neg


def auroc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties counting half. NaN if one class."""
    s, y = _inputs(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    pos, neg = _tie_groups(s, y)
    # negatives strictly below each group = all negatives not yet seen in descending order
    neg_below = n_neg - np.cumsum(neg)
    wins = float(np.sum(pos * neg_below)) + 0.5 * float(np.sum(pos * neg))
    return wins / (n_pos * n_neg)


def aupr(scores, labels) -> float:
    """Average precision (step integral); tied scores form one group. NaN if no positives."""
    s, y = _inputs(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        return math.nan
    pos, neg = _tie_groups(s, y)
    tp = np.cumsum(pos)
    fp = np.cumsum(neg)
    precision = tp / (tp + fp)
    return float(np.sum(precision * pos)) / n_pos


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) points from (0, 0) to (1, 1), one per distinct score."""
    s, y = _inputs(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    pts = [(0.0, 0.0)]
    if n_pos == 0 or n_neg == 0:
        return pts + [(1.0, 1.0)]
    pos, neg = _tie_groups(s, y)
    for tp, fp in zip(np.cumsum(pos), np.cumsum(neg)):
        pts.append((fp / n_neg, tp / n_pos))
    return pts


def pr_curve(scores, labels) -> list[tuple[float, float]]:
    """(recall, precision) points, one per distinct score, in descending-score order."""
    s, y = _inputs(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        return []
    pos, neg = _tie_groups(s, y)
    tp = np.cumsum(pos)
    fp = np.cumsum(neg)
    return [(t / n_pos, t / (t + f)) for t, f in zip(tp, fp)]


def evaluate(scores, labels, threshold=DEFAULT_THRESHOLD) -> MetricsReport:
    counts = confusion(scores, labels, threshold)
    pm = point_metrics(counts)
    undefined = {}
    roc = auroc(scores, labels)
    if math.isnan(roc):
        undefined["auroc"] = "labels contain a single class"
    ap = aupr(scores, labels)
    if math.isnan(ap):
        undefined["aupr"] = "labels contain no positives"
    for name, reason in undefined.items():
        log.warning("%s undefined: %s", name, reason)
    return MetricsReport(*counts, threshold=threshold, auroc=roc, aupr=ap,
                         roc_points=roc_curve(scores, labels), pr_points=pr_curve(scores, labels),
                         undefined=undefined, **pm)


def write_metrics_json(path, report: MetricsReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def write_curve_csv(path, points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in points:
            w.writerow([repr(float(x)), repr(float(y))])


def curve_svg(points, title="", size=320, pad=30) -> str:
    """Minimal static SVG: unit axes box plus the curve as a polyline."""
    inner = size - 2 * pad

    def px(x, y):
        return f"{pad + x * inner:.2f},{pad + (1 - y) * inner:.2f}"

    poly = " ".join(px(x, y) for x, y in points)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'  <rect x="{pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="#888"/>\n'
        f'  <text x="{size / 2:.0f}" y="{pad - 10}" text-anchor="middle" font-size="12">{title}</text>\n'
        f'  <polyline points="{poly}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>\n'
        "</svg>\n"
    )
