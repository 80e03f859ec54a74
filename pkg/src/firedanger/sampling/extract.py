"""Payload extraction for the four dataset modalities.

For a record predicting day ``s`` the input window is days ``t-9 .. t`` with
``t = s - 1``. Spatial patches are centred on the pixel; cells outside the
grid replicate the nearest edge cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from firedanger.datacube.cube import Datacube
from firedanger.datacube.schema import dynamic_input_names, input_names
from firedanger.errors import BoundsError, SampleRejected, SchemaError

WINDOW_DAYS = 10
PATCH = 25
MODALITIES = ("pixel", "temporal", "spatial", "spatiotemporal")
MEAN_PREFIX = "mean10_"


@dataclass(frozen=True)
class ModalityShape:
    modality: str
    n_features: int
    days: int = WINDOW_DAYS
    patch: int = PATCH
    n_f_prime: int = 0

    @property
    def payload_shape(self) -> tuple[int, ...]:
        if self.modality == "pixel":
            return (self.n_f_prime,)
        if self.modality == "temporal":
            return (self.days, self.n_features)
        if self.modality == "spatial":
            return (self.n_features, self.patch, self.patch)
        return (self.days, self.n_features, self.patch, self.patch)


def modality_shape(cube_or_schema, modality: str) -> ModalityShape:
    schema = cube_or_schema.schema if isinstance(cube_or_schema, Datacube) else cube_or_schema
    if modality not in MODALITIES:
        raise SchemaError(f"unknown modality {modality!r}; expected one of {MODALITIES}")
    nf = len(input_names(schema))
    return ModalityShape(modality, nf, n_f_prime=nf + len(dynamic_input_names(schema)))


def feature_names(schema, modality: str) -> list[str]:
    names = input_names(schema)
    if modality == "pixel":
        return names + [MEAN_PREFIX + n for n in dynamic_input_names(schema)]
    return names


class Extractor:
    """Gathers payloads from a cube; all methods are pure reads."""

    def __init__(self, cube: Datacube, days: int = WINDOW_DAYS, patch: int = PATCH):
        self.cube = cube
        self.days = days
        self.patch = patch
        self.half = patch // 2
        self.names = input_names(cube.schema)
        self.dynamic = dynamic_input_names(cube.schema)
        self.layers = [(cube.spec(n).kind == "dynamic", cube.array(n)) for n in self.names]
        self._valid: np.ndarray | None = None

    # -- bookkeeping

    def check_day(self, target_day: int) -> int:
        if not self.days <= target_day < self.cube.n_days:
            raise BoundsError(
                f"target day {target_day} outside [{self.days}, {self.cube.n_days}): the {self.days}-day input window "
                "must fit inside the cube"
            )
        return target_day - 1

    def valid_mask(self) -> np.ndarray:
        """``valid[t, r, c]``: the full 25x25x10 window ending on input day ``t`` is NaN-free.

        One mask serves every modality so all of them share an index set.
        """
        if self._valid is None:
            cube = self.cube
            bad_static = np.zeros(cube.grid.shape, dtype=bool)
            bad = np.zeros((cube.n_days, *cube.grid.shape), dtype=bool)
            for dyn, arr in self.layers:
                if dyn:
                    bad |= np.isnan(arr)
                else:
                    bad_static |= np.isnan(arr)
            bad |= bad_static[None]
            size = (1, self.patch, self.patch)
            bad = ndimage.maximum_filter(bad.view(np.uint8), size=size, mode="nearest").astype(bool)
            # window t-9..t: running max over the trailing days
            csum = np.cumsum(bad, axis=0, dtype=np.int32)
            trailing = csum.copy()
            trailing[self.days :] -= csum[: -self.days]
            valid = trailing == 0
            valid[: self.days - 1] = False
            self._valid = valid
        return self._valid

    # -- index helpers

    def _window(self, t: np.ndarray) -> np.ndarray:
        return t[:, None] + np.arange(-self.days + 1, 1)[None, :]

    def _patch_idx(self, centre: np.ndarray, size: int) -> np.ndarray:
        offs = np.arange(-self.half, self.half + 1)
        return np.clip(centre[:, None] + offs[None, :], 0, size - 1)

    # -- batch extraction

    def batch(self, modality: str, rows, cols, target_days) -> np.ndarray:
        """Payloads for many records at once, ``[N, *payload_shape]`` float32.

        No NaN filtering happens here; see :meth:`valid_mask`.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        s = np.asarray(target_days, dtype=np.int64)
        if s.size and (s.min() < self.days or s.max() >= self.cube.n_days):
            raise BoundsError(f"target days must lie in [{self.days}, {self.cube.n_days})")
        t = s - 1
        n = rows.size
        nf = len(self.names)
        if modality == "pixel":
            out = np.empty((n, nf + len(self.dynamic)), dtype=np.float32)
            w = self._window(t)
            k = 0
            for i, (dyn, arr) in enumerate(self.layers):
                if dyn:
                    out[:, i] = arr[t, rows, cols]
                    vals = arr[w, rows[:, None], cols[:, None]].astype(np.float64)
                    out[:, nf + k] = vals.sum(axis=1) / self.days
                    k += 1
                else:
                    out[:, i] = arr[rows, cols]
            return out
        if modality == "temporal":
            out = np.empty((n, self.days, nf), dtype=np.float32)
            w = self._window(t)
            for i, (dyn, arr) in enumerate(self.layers):
                out[:, :, i] = arr[w, rows[:, None], cols[:, None]] if dyn else arr[rows, cols][:, None]
            return out
        rr = self._patch_idx(rows, self.cube.grid.n_rows)
        cc = self._patch_idx(cols, self.cube.grid.n_cols)
        if modality == "spatial":
            out = np.empty((n, nf, self.patch, self.patch), dtype=np.float32)
            for i, (dyn, arr) in enumerate(self.layers):
                if dyn:
                    out[:, i] = arr[t[:, None, None], rr[:, :, None], cc[:, None, :]]
                else:
                    out[:, i] = arr[rr[:, :, None], cc[:, None, :]]
            return out
        if modality == "spatiotemporal":
            out = np.empty((n, self.days, nf, self.patch, self.patch), dtype=np.float32)
            w = self._window(t)
            for i, (dyn, arr) in enumerate(self.layers):
                if dyn:
                    out[:, :, i] = arr[w[:, :, None, None], rr[:, None, :, None], cc[:, None, None, :]]
                else:
                    out[:, :, i] = arr[rr[:, :, None], cc[:, None, :]][:, None]
            return out
        raise SchemaError(f"unknown modality {modality!r}; expected one of {MODALITIES}")

    def one(self, modality: str, row: int, col: int, target_day: int) -> np.ndarray:
        """Single payload; raises :class:`SampleRejected` if it contains NaN."""
        self.check_day(target_day)
        if not (0 <= row < self.cube.grid.n_rows and 0 <= col < self.cube.grid.n_cols):
            raise BoundsError(f"pixel ({row}, {col}) outside the grid")
        payload = self.batch(modality, [row], [col], [target_day])[0]
        if np.isnan(payload).any():
            raise SampleRejected(f"{modality} window for ({row}, {col}) day {target_day} contains NaN")
        return payload


def extract_pixel(cube: Datacube, row: int, col: int, target_day: int) -> np.ndarray:
    return Extractor(cube).one("pixel", row, col, target_day)


def extract_temporal(cube: Datacube, row: int, col: int, target_day: int) -> np.ndarray:
    return Extractor(cube).one("temporal", row, col, target_day)


def extract_spatial(cube: Datacube, row: int, col: int, target_day: int) -> np.ndarray:
    return Extractor(cube).one("spatial", row, col, target_day)


def extract_spatiotemporal(cube: Datacube, row: int, col: int, target_day: int) -> np.ndarray:
    return Extractor(cube).one("spatiotemporal", row, col, target_day)
