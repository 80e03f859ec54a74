"""Model-agnostic scoring of raw payloads, test-set evaluation and score files."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from firedanger.binfmt import read_header
from firedanger.errors import FormatError, SchemaError
from firedanger.evaluation.metrics import MetricsReport, threshold_metrics
from firedanger.forest import ForestModel, load_forest
from firedanger.neural.models import Model
from firedanger.neural.train import load_model, predict_proba
from firedanger.sampling.samples_io import SampleSet
from firedanger.sampling.standardize import StandardizationStats, apply_standardization


@dataclass
class Predictor:
    """A trained model bundled with the feature contract it was trained under."""

    arch: str
    model: ForestModel | Model
    modality: str
    names: list[str]
    stats: StandardizationStats
    header: dict

    @property
    def schema_hash(self) -> str | None:
        return self.header.get("schema_hash")

    def score_standardized(self, x: np.ndarray) -> np.ndarray:
        if isinstance(self.model, ForestModel):
            return np.asarray(self.model.predict_proba(x), dtype=np.float64)
        return np.asarray(predict_proba(self.model, x), dtype=np.float64)

    def score(self, raw_payloads: np.ndarray) -> np.ndarray:
        """Danger scores for a raw (unstandardized) batch ``[N, *payload]``."""
        x = apply_standardization(self.stats, raw_payloads, self.modality, self.names)
        return self.score_standardized(x)

    def score_one(self, raw_payload: np.ndarray) -> float:
        return float(self.score(np.asarray(raw_payload)[None])[0])


def load_predictor(path: str | os.PathLike) -> Predictor:
    """Open a PRF1 or PMC1 checkpoint written by the training stage."""
    magic, _, _, _ = read_header(path)
    if magic == b"PRF1":
        model, header = load_forest(path)
        arch = "rf"
    elif magic == b"PMC1":
        model, header = load_model(path)
        arch = header["architecture"]
    else:
        raise FormatError(f"{path}: {magic!r} is not a model checkpoint (expected PRF1 or PMC1)", 0)
    try:
        stats = StandardizationStats.from_dict(header["standardization"])
        modality = header["modality"]
        names = list(header["feature_names"])
    except KeyError as exc:
        raise FormatError(f"{path}: checkpoint header lacks {exc}", 8) from exc
    return Predictor(arch, model, modality, names, stats, header)


@dataclass
class Evaluation:
    report: MetricsReport
    scores: np.ndarray
    rows: list[dict]


def evaluate(predictor: Predictor, samples: SampleSet, threshold: float = 0.5) -> Evaluation:
    """Score every sample in eval mode and compute the metrics report."""
    if samples.modality != predictor.modality:
        raise SchemaError(f"model expects {predictor.modality} samples, got {samples.modality}")
    if predictor.schema_hash and samples.header.get("schema_hash") not in (None, predictor.schema_hash):
        raise SchemaError("samples and model were built from different cube schemas (schema_hash differs)")
    if samples.names != predictor.names:
        raise SchemaError("samples carry different feature names than the model was trained on")
    scores = np.empty(len(samples), dtype=np.float64)
    step = 1024
    for s in range(0, len(samples), step):
        scores[s : s + step] = predictor.score(np.asarray(samples.payloads[s : s + step]))
    report = threshold_metrics(scores, samples.labels, threshold)
    rows = score_rows(samples, scores)
    return Evaluation(report, scores, rows)


def score_rows(samples: SampleSet, scores: np.ndarray) -> list[dict]:
    import datetime as dt

    start = dt.date.fromisoformat(samples.header.get("cube_start_date", "1970-01-01"))
    idx = samples.index
    return [
        {
            "row": int(r),
            "col": int(c),
            "date": (start + dt.timedelta(days=int(d))).isoformat(),
            "score": float(s),
            "label": int(y),
        }
        for r, c, d, s, y in zip(idx.rows, idx.cols, idx.days, scores, idx.labels)
    ]
