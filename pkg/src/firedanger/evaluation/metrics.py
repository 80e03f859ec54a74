"""Rank-based AUROC and thresholded positive-class metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from firedanger.errors import DimensionError, UndefinedMetricError


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise DimensionError(f"{s.size} scores but {y.size} labels")
    if np.any((y != 0) & (y != 1)):
        raise DimensionError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks: P(score_pos > score_neg) + 0.5 P(tie)."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUROC needs both classes (got {n_pos} positives, {n_neg} negatives)")
    if np.isnan(s).any():
        raise UndefinedMetricError("scores contain NaN")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_from_precision_recall(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    auroc: float | None
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["precision_defined"] = self.precision is not None
        d["recall_defined"] = self.recall is not None
        d["auroc_defined"] = self.auroc is not None
        return d


def threshold_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Counts and positive-class metrics; a score ``>= threshold`` predicts fire.

    Undefined ratios are ``None`` rather than 0.
    """
    s, y = _check(scores, labels)
    if s.size == 0:
        raise DimensionError("threshold_metrics needs at least one sample")
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else None
    try:
        auc = auroc(s, y)
    except UndefinedMetricError:
        auc = None
    return MetricsReport(float(threshold), tp, fp, tn, fn, precision, recall, f1, auc, int(pos.sum()), int((~pos).sum()))
