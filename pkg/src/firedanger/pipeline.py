"""File-to-file pipeline stages shared by the command line and the experiments.

Each stage reads its inputs from disk, writes its outputs to disk and embeds
the configuration and seed it ran with in every header it writes.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from firedanger.datacube.cube import Datacube
from firedanger.errors import ConfigError, SchemaError
from firedanger.forest import ForestParams, fit_forest, save_forest
from firedanger.neural.models import MODALITY_OF, build_model
from firedanger.neural.train import TrainConfig, TrainResult, save_model, train
from firedanger.sampling.dataset import SPLITS, SplitConfig, SplitSummary, select_records
from firedanger.sampling.extract import MODALITIES, Extractor, feature_names
from firedanger.sampling.samples_io import SampleSet, load_samples, write_samples
from firedanger.sampling.standardize import (
    StandardizationStats,
    StandardizedView,
    fit_standardization,
    stats_for_modality,
)

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """Which samples to build: split years, negative ratio, seed and modalities."""

    split: SplitConfig = field(default_factory=SplitConfig)
    ratio: float = 2.0
    seed: int = 0
    no_fire_scope: str = "region"
    modalities: tuple[str, ...] = MODALITIES

    def __post_init__(self):
        if not self.ratio > 0:
            raise ConfigError(f"ratio must be > 0, got {self.ratio}")
        if self.no_fire_scope not in ("region", "pixel"):
            raise ConfigError(f"no_fire_scope must be 'region' or 'pixel', got {self.no_fire_scope!r}")
        unknown = [m for m in self.modalities if m not in MODALITIES]
        if unknown or not self.modalities:
            raise ConfigError(f"modalities must be a non-empty subset of {list(MODALITIES)}, got {list(self.modalities)}")

    def to_dict(self) -> dict:
        return {
            "split": self.split.to_dict(),
            "ratio": self.ratio,
            "seed": self.seed,
            "no_fire_scope": self.no_fire_scope,
            "modalities": list(self.modalities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {"split", "ratio", "seed", "no_fire_scope", "modalities"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment config field(s): {sorted(extra)}")
        split = d.get("split", {})
        try:
            split_cfg = SplitConfig(
                **{k: tuple(int(y) for y in v) for k, v in split.items() if k.endswith("_years")}
            )
        except TypeError as exc:
            raise ConfigError(f"split: {exc}") from exc
        return cls(
            split=split_cfg,
            ratio=float(d.get("ratio", 2.0)),
            seed=int(d.get("seed", 0)),
            no_fire_scope=d.get("no_fire_scope", "region"),
            modalities=tuple(d.get("modalities", MODALITIES)),
        )


@dataclass
class ExtractResult:
    paths: dict[str, dict[str, Path]]  # modality -> split -> samples file
    summary: SplitSummary
    pixel_stats: StandardizationStats


def samples_path(out_dir: str | os.PathLike, modality: str, split: str) -> Path:
    return Path(out_dir) / f"{modality}_{split}.pfs"


def extract_experiment(
    cube: Datacube,
    config: ExperimentConfig,
    out_dir: str | os.PathLike,
    extractor: Extractor | None = None,
) -> ExtractResult:
    """Select records once, then write one samples file per modality and split.

    Standardization is fitted on the pixel-modality training payloads and
    stored in every file's header; payloads themselves stay raw.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ex = extractor or Extractor(cube)
    records, summary = select_records(cube, config.split, config.ratio, config.seed, config.no_fire_scope, ex)
    train_idx = records["train"]
    if len(train_idx) == 0:
        raise ConfigError("split.train_years selects no usable fire events in this cube")
    px_names = feature_names(cube.schema, "pixel")
    px_train = ex.batch("pixel", train_idx.rows, train_idx.cols, train_idx.days)
    pixel_stats = fit_standardization(px_train, "pixel", px_names)
    extra_common = {"experiment": config.to_dict(), "seed": config.seed, "cube_attrs": _jsonable(cube.attrs)}
    paths: dict[str, dict[str, Path]] = {}
    for modality in config.modalities:
        stats = stats_for_modality(pixel_stats, modality, feature_names(cube.schema, modality))
        paths[modality] = {}
        for split in SPLITS:
            path = samples_path(out_dir, modality, split)
            extra = {**extra_common, "split": split, "standardization": stats.to_dict()}
            write_samples(path, cube, modality, records[split], extra, ex)
            paths[modality][split] = path
    with open(out_dir / "split_summary.json", "w") as fh:
        json.dump({**summary.to_dict(), "experiment": config.to_dict()}, fh, indent=2, sort_keys=True)
    return ExtractResult(paths, summary, pixel_stats)


def _jsonable(attrs: dict) -> dict:
    return json.loads(json.dumps(attrs, default=str))


def model_config_for(arch: str, samples: SampleSet, overrides: dict | None = None) -> dict:
    """Model dimensions implied by a samples file's payload shape and retained features."""
    stats = samples.stats
    n_features = len(stats.retained(samples.names)) if stats else len(samples.names)
    shape = samples.payloads.shape[1:]
    cfg: dict = {"n_features": n_features}
    if arch in ("lstm", "convlstm"):
        cfg["days"] = int(shape[0])
    if arch in ("cnn", "convlstm"):
        cfg["patch"] = int(shape[-1])
    cfg.update(overrides or {})
    return cfg


def contract_header(samples: SampleSet) -> dict:
    """Header fields a checkpoint needs to score raw payloads later."""
    if samples.stats is None:
        raise SchemaError(f"samples for {samples.modality} carry no standardization statistics")
    return {
        "modality": samples.modality,
        "feature_names": list(samples.names),
        "standardization": samples.stats.to_dict(),
        "schema_hash": samples.header.get("schema_hash"),
        "experiment": samples.header.get("experiment"),
    }


def standardized(samples: SampleSet) -> StandardizedView:
    return StandardizedView(samples.payloads, samples.stats, samples.modality, samples.names)


def check_modality(arch: str, samples: SampleSet) -> None:
    if arch not in MODALITY_OF:
        raise ConfigError(f"architecture must be one of {sorted(MODALITY_OF)}, got {arch!r}")
    if MODALITY_OF[arch] != samples.modality:
        raise SchemaError(f"architecture {arch!r} needs {MODALITY_OF[arch]} samples, got {samples.modality} samples")


def train_checkpoint(
    arch: str,
    train_samples: SampleSet,
    out_path: str | os.PathLike,
    seed: int = 0,
    train_config: TrainConfig | None = None,
    model_overrides: dict | None = None,
    forest_params: ForestParams | None = None,
    val_samples: SampleSet | None = None,
) -> TrainResult | None:
    """Fit ``arch`` on a samples file and write its checkpoint.

    Returns the neural training result (``None`` for the forest).
    """
    check_modality(arch, train_samples)
    header = contract_header(train_samples)
    x = standardized(train_samples)
    y = train_samples.labels
    if arch == "rf":
        params = forest_params or ForestParams()
        forest = fit_forest(x[:], y, params, seed=seed)
        save_forest(forest, out_path, {**header, "seed": seed, "config": {"architecture": arch, "forest": params.to_dict()}})
        return None
    cfg = train_config or TrainConfig.reference(arch, seed=seed)
    model = build_model(arch, model_config_for(arch, train_samples, model_overrides), seed=seed)
    x_val = y_val = None
    if val_samples is not None and len(val_samples):
        check_modality(arch, val_samples)
        x_val, y_val = standardized(val_samples)[:], val_samples.labels
    result = train(model, x, y, cfg, x_val, y_val)
    save_model(
        result.best_model,
        out_path,
        {
            **header,
            "seed": seed,
            "config": {"architecture": arch, "train": cfg.to_dict(), "model": model.config()},
            "best_epoch": result.best_epoch,
            "training_log": result.log,
        },
    )
    return result


def load_split(paths: dict[str, Path], split: str, mmap: bool = True) -> SampleSet:
    return load_samples(paths[split], mmap=mmap)


def labels_balance(samples: SampleSet) -> tuple[int, int]:
    y = np.asarray(samples.labels)
    return int((y == 1).sum()), int((y == 0).sum())
