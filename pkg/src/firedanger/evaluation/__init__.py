"""Metrics, test-set evaluation and danger-map rendering."""

from firedanger.evaluation.maps import NAN_RGB, DangerMap, colormap, render_map
from firedanger.evaluation.metrics import MetricsReport, auroc, f1_from_precision_recall, threshold_metrics
from firedanger.evaluation.scoring import Evaluation, Predictor, evaluate, load_predictor, score_rows

__all__ = [
    "NAN_RGB",
    "DangerMap",
    "Evaluation",
    "MetricsReport",
    "Predictor",
    "auroc",
    "colormap",
    "evaluate",
    "f1_from_precision_recall",
    "load_predictor",
    "render_map",
    "score_rows",
    "threshold_metrics",
]
