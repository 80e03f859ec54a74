"""Per-feature z-scoring fitted on training payloads only."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from firedanger.errors import DimensionError, SchemaError
from firedanger.sampling.extract import MEAN_PREFIX

# axis holding the feature channel, for a batch [N, *payload]
FEATURE_AXIS = {"pixel": 1, "temporal": 2, "spatial": 1, "spatiotemporal": 2}


@dataclass
class StandardizationStats:
    """Mean and population std per retained feature, plus the dropped constant ones."""

    names: list[str]
    mean: np.ndarray
    std: np.ndarray
    dropped: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if not (len(self.names) == self.mean.size == self.std.size):
            raise DimensionError("stats names, means and stds must have equal length")
        if np.any(self.std <= 0):
            raise SchemaError("retained features must have std > 0")

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "mean": [float(x) for x in self.mean],
            "std": [float(x) for x in self.std],
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> StandardizationStats:
        return cls(list(d["names"]), d["mean"], d["std"], list(d.get("dropped", [])))

    def lookup(self, name: str) -> tuple[float, float] | None:
        try:
            i = self.names.index(name)
        except ValueError:
            return None
        return float(self.mean[i]), float(self.std[i])

    def retained(self, names: list[str]) -> list[str]:
        """The subset of ``names`` this set of stats keeps, in order."""
        keep = []
        for n in names:
            if n in self.dropped:
                continue
            if self.lookup(n) is None:
                raise SchemaError(f"feature {n!r} has no standardization statistics")
            keep.append(n)
        return keep


def fit_standardization(payloads: np.ndarray, modality: str, names: list[str]) -> StandardizationStats:
    """Fit on a training batch ``[N, *payload]``; constant features are dropped and listed.

    Channel statistics pool every sample, day and patch cell.
    """
    axis = FEATURE_AXIS[modality]
    x = np.asarray(payloads)
    if x.ndim < 2 or x.shape[axis] != len(names):
        raise DimensionError(f"{modality} batch {x.shape} does not carry {len(names)} features on axis {axis}")
    if x.shape[0] == 0:
        raise DimensionError("cannot fit standardization on an empty training set")
    moved = np.moveaxis(x, axis, 0).reshape(len(names), -1)
    keep_names, means, stds, dropped = [], [], [], []
    for name, row in zip(names, moved):
        row = row.astype(np.float64)
        if row.max() == row.min():
            dropped.append(name)
            continue
        keep_names.append(name)
        means.append(row.mean())
        stds.append(row.std())
    return StandardizationStats(keep_names, np.array(means), np.array(stds), dropped)


def stats_for_modality(pixel_stats: StandardizationStats, modality: str, names: list[str]) -> StandardizationStats:
    """Map pixel-fitted stats onto another modality's features by name.

    Sequence and patch modalities only carry the current-day inputs; their
    stats are the pixel modality's current-day entries.
    """
    keep = pixel_stats.retained(names)
    pairs = [pixel_stats.lookup(n) for n in keep]
    dropped = [n for n in names if n in pixel_stats.dropped]
    return StandardizationStats(keep, [p[0] for p in pairs], [p[1] for p in pairs], dropped)


def apply_standardization(stats: StandardizationStats, payloads: np.ndarray, modality: str, names: list[str]) -> np.ndarray:
    """Standardize a batch ``[N, *payload]`` (float32 out), removing dropped channels."""
    axis = FEATURE_AXIS[modality]
    x = np.asarray(payloads)
    if x.shape[axis] != len(names):
        raise DimensionError(f"{modality} batch {x.shape} does not carry {len(names)} features on axis {axis}")
    keep = stats.retained(names)
    idx = [names.index(n) for n in keep]
    if len(idx) != len(names):
        x = np.take(x, idx, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = len(keep)
    mean = np.array([stats.lookup(n)[0] for n in keep]).reshape(shape)
    std = np.array([stats.lookup(n)[1] for n in keep]).reshape(shape)
    out = np.empty(x.shape, dtype=np.float32)
    step = 256  # bounds the float64 temporaries on large patch batches
    for s in range(0, x.shape[0], step):
        out[s : s + step] = (x[s : s + step] - mean) / std
    return out


def standardize_record(stats: StandardizationStats, payload: np.ndarray, modality: str, names: list[str]) -> np.ndarray:
    return apply_standardization(stats, np.asarray(payload)[None], modality, names)[0]


def is_mean_feature(name: str) -> bool:
    return name.startswith(MEAN_PREFIX)


class StandardizedView:
    """Array-like that standardizes raw payloads on access.

    Indexing along the first axis (integers, slices or index arrays) returns a
    standardized float32 batch, so large raw sets can stay memory-mapped.
    """

    def __init__(self, raw, stats: StandardizationStats, modality: str, names: list[str]):
        self.raw = raw
        self.stats = stats
        self.modality = modality
        self.names = names
        kept = len(stats.retained(names))
        shape = list(raw.shape)
        shape[FEATURE_AXIS[modality]] = kept
        self.shape = tuple(shape)
        self.ndim = len(shape)
        self.dtype = np.dtype(np.float32)

    def __len__(self) -> int:
        return self.shape[0]

    def __getitem__(self, index) -> np.ndarray:
        if isinstance(index, (int, np.integer)):
            return self[[index]][0]
        if not isinstance(index, slice):
            index = np.asarray(index)
            # sorted gathers are cheaper on memory-mapped files
            order = np.argsort(index, kind="stable")
            batch = np.asarray(self.raw[index[order]])
            out = apply_standardization(self.stats, batch, self.modality, self.names)
            inv = np.empty_like(order)
            inv[order] = np.arange(order.size)
            return out[inv]
        return apply_standardization(self.stats, np.asarray(self.raw[index]), self.modality, self.names)
