"""Next-day danger maps over the full grid."""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from firedanger.datacube.cube import Datacube, save_cube
from firedanger.datacube.schema import GridSpec, VariableSpec
from firedanger.errors import BoundsError, SchemaError
from firedanger.evaluation.scoring import Predictor
from firedanger.sampling.extract import WINDOW_DAYS, Extractor, feature_names

NAN_RGB = (128, 128, 128)
MAP_VARIABLE = VariableSpec("danger_score", "static", "input", "probability", "nearest")


@lru_cache(maxsize=1)
def colormap() -> np.ndarray:
    """The 256 fixed RGB triplets (blue for 0, dark red for 1) as ``uint8 [256, 3]``."""
    text = resources.files("firedanger.evaluation").joinpath("colormap.csv").read_text()
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    table = np.array([[int(r), int(g), int(b)] for _, r, g, b in rows], dtype=np.uint8)
    if table.shape != (256, 3):
        raise SchemaError(f"colormap must have 256 entries, found {table.shape[0]}")
    return table


@dataclass
class DangerMap:
    grid: GridSpec
    date: dt.date
    scores: np.ndarray  # [rows, cols], NaN where no payload could be built

    def __post_init__(self):
        if self.scores.shape != self.grid.shape:
            raise SchemaError(f"scores {self.scores.shape} do not match grid {self.grid.shape}")

    def rgb(self) -> np.ndarray:
        s = self.scores
        nan = np.isnan(s)
        idx = np.clip(np.floor(np.where(nan, 0.0, s) * 255.0 + 0.5), 0, 255).astype(np.int64)
        img = colormap()[idx]
        img[nan] = NAN_RGB
        return img

    def save_png(self, path: str | os.PathLike) -> None:
        from PIL import Image

        Image.fromarray(self.rgb(), mode="RGB").save(path, format="PNG")

    def save_pfc(self, path: str | os.PathLike, attrs: dict | None = None) -> None:
        cube = Datacube(
            self.grid,
            [MAP_VARIABLE],
            self.date,
            1,
            {},
            {MAP_VARIABLE.name: self.scores.astype(np.float32)},
            {"product": "danger_map", "date": self.date.isoformat(), **(attrs or {})},
        )
        save_cube(cube, path, validate=False)


def render_map(
    predictor: Predictor,
    cube: Datacube,
    date: dt.date,
    row_ranges: list[tuple[int, int]] | None = None,
    rows_per_chunk: int = 4,
    extractor: Extractor | None = None,
) -> DangerMap:
    """Score every cell for the fire day ``date`` (inputs end the day before).

    ``row_ranges`` selects which row bands to compute, in any order; bands not
    listed stay NaN. Results do not depend on the banding.
    """
    day = (date - cube.start_date).days
    if not WINDOW_DAYS <= day < cube.n_days:
        raise BoundsError(
            f"map date {date} must fall on cube days {WINDOW_DAYS}..{cube.n_days - 1} "
            f"({cube.date_of(WINDOW_DAYS)} to {cube.end_date}) so a full input window exists"
        )
    if feature_names(cube.schema, predictor.modality) != predictor.names:
        raise SchemaError("cube features differ from those the model was trained on")
    ex = extractor or Extractor(cube)
    valid = ex.valid_mask()[day - 1]
    n_rows, n_cols = cube.grid.shape
    scores = np.full(cube.grid.shape, np.nan, dtype=np.float64)
    if row_ranges is None:
        row_ranges = [(r, min(r + rows_per_chunk, n_rows)) for r in range(0, n_rows, rows_per_chunk)]
    for r0, r1 in row_ranges:
        for s in range(r0, r1, rows_per_chunk):
            e = min(s + rows_per_chunk, r1)
            rr, cc = np.nonzero(valid[s:e])
            if rr.size == 0:
                continue
            rr = rr + s
            payload = ex.batch(predictor.modality, rr, cc, np.full(rr.size, day))
            scores[rr, cc] = predictor.score(payload)
    return DangerMap(cube.grid, date, scores)
