"""Harmonisation transforms that turn source rasters into cube layers."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from firedanger.datacube.cube import Datacube
from firedanger.datacube.schema import GridSpec
from firedanger.errors import BoundsError, GridError, SchemaError, StateError

log = logging.getLogger(__name__)

SNAPSHOT_HOURS = (4, 8, 12, 16, 20)
LANDCOVER_VINTAGES = (2006, 2012, 2018)
MIN_BURNED_AREA_HA = 30.0

# which daily statistics each weather quantity contributes
WEATHER_AGGREGATES = {
    "temperature": ("min", "max"),
    "u_wind": ("min", "max"),
    "v_wind": ("min", "max"),
    "precipitation": ("max",),
}


@dataclass
class Raster:
    """A 2-D array on its own grid (same projection as the cube)."""

    data: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        if self.data.shape != self.grid.shape:
            raise GridError(f"raster shape {self.data.shape} does not match its grid {self.grid.shape}")


# ---------------------------------------------------------------- resampling


def _centres(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    xs = grid.origin_x + (np.arange(grid.n_cols) + 0.5) * grid.cell_size
    ys = grid.origin_y - (np.arange(grid.n_rows) + 0.5) * grid.cell_size
    return xs, ys


def _locate(grid: GridSpec, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integer cell indices containing coordinates; -1 where outside."""
    cols = np.floor((xs - grid.origin_x) / grid.cell_size).astype(np.int64)
    rows = np.floor((grid.origin_y - ys) / grid.cell_size).astype(np.int64)
    cols[(cols < 0) | (cols >= grid.n_cols)] = -1
    rows[(rows < 0) | (rows >= grid.n_rows)] = -1
    return rows, cols


def _resample_mean(src: Raster, dst: GridSpec) -> np.ndarray:
    xs, ys = _centres(src.grid)
    r, c = _locate(dst, xs, ys)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    vals = src.data.astype(np.float64)
    keep = (rr >= 0) & (cc >= 0) & np.isfinite(vals)
    flat = rr[keep] * dst.n_cols + cc[keep]
    n = dst.n_rows * dst.n_cols
    sums = np.bincount(flat, weights=vals[keep], minlength=n)
    counts = np.bincount(flat, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return out.reshape(dst.shape)


def _resample_mode(src: Raster, dst: GridSpec) -> np.ndarray:
    xs, ys = _centres(src.grid)
    r, c = _locate(dst, xs, ys)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    vals = src.data
    keep = (rr >= 0) & (cc >= 0) & np.isfinite(vals)
    classes, codes = np.unique(vals[keep], return_inverse=True)
    n = dst.n_rows * dst.n_cols
    out = np.full(n, np.nan)
    if classes.size == 0:
        return out.reshape(dst.shape)
    flat = rr[keep] * dst.n_cols + cc[keep]
    table = np.zeros((n, classes.size), dtype=np.int64)
    np.add.at(table, (flat, codes), 1)
    has = table.sum(axis=1) > 0
    # argmax returns the first maximum, i.e. the smallest class code on ties
    out[has] = classes[table[has].argmax(axis=1)]
    return out.reshape(dst.shape)


def _resample_nearest(src: Raster, dst: GridSpec) -> np.ndarray:
    xs, ys = _centres(dst)
    r, c = _locate(src.grid, xs, ys)
    out = np.full(dst.shape, np.nan)
    rv, cv = r >= 0, c >= 0
    out[np.ix_(rv, cv)] = src.data[np.ix_(r[rv], c[cv])]
    return out


def _resample_bilinear(src: Raster, dst: GridSpec) -> np.ndarray:
    xs, ys = _centres(dst)
    g = src.grid
    # fractional index in source-centre coordinates
    fc = (xs - g.origin_x) / g.cell_size - 0.5
    fr = (g.origin_y - ys) / g.cell_size - 0.5
    inside_c = (fc >= -0.5) & (fc <= g.n_cols - 0.5)
    inside_r = (fr >= -0.5) & (fr <= g.n_rows - 0.5)
    fc = np.clip(fc, 0, g.n_cols - 1)
    fr = np.clip(fr, 0, g.n_rows - 1)
    c0 = np.minimum(np.floor(fc).astype(np.int64), max(g.n_cols - 2, 0))
    r0 = np.minimum(np.floor(fr).astype(np.int64), max(g.n_rows - 2, 0))
    c1 = np.minimum(c0 + 1, g.n_cols - 1)
    r1 = np.minimum(r0 + 1, g.n_rows - 1)
    wc = (fc - c0)[None, :]
    wr = (fr - r0)[:, None]
    d = src.data.astype(np.float64)
    top = d[np.ix_(r0, c0)] * (1 - wc) + d[np.ix_(r0, c1)] * wc
    bot = d[np.ix_(r1, c0)] * (1 - wc) + d[np.ix_(r1, c1)] * wc
    out = top * (1 - wr) + bot * wr
    out[~inside_r, :] = np.nan
    out[:, ~inside_c] = np.nan
    return out


_RULES = {
    "mean": _resample_mean,
    "mode": _resample_mode,
    "nearest": _resample_nearest,
    "bilinear": _resample_bilinear,
}


def resample_to_grid(src: Raster, dst: GridSpec, rule: str) -> np.ndarray:
    """Resample ``src`` onto ``dst``; cells outside the source extent become NaN.

    mean: average of valid source cells whose centres fall in the target cell.
    mode: most frequent valid class (smallest code on ties).
    nearest: source cell containing the target centre.
    bilinear: interpolation between source centres; NaN if any corner is NaN.
    """
    if src.grid.crs != dst.crs:
        raise GridError(f"projection mismatch: source {src.grid.crs} vs destination {dst.crs}")
    if rule not in _RULES:
        raise GridError(f"unknown resample rule {rule!r}")
    return _RULES[rule](src, dst).astype(np.float32)


# ---------------------------------------------------------------- temporal transforms


def aggregate_daily_weather(snapshots: np.ndarray, quantity: str) -> dict[str, np.ndarray]:
    """Reduce ``[days, 5, rows, cols]`` hourly snapshots to daily min/max layers.

    NaN in any snapshot makes that cell NaN for the day.
    """
    if quantity not in WEATHER_AGGREGATES:
        raise SchemaError(f"unknown weather quantity {quantity!r}; expected one of {sorted(WEATHER_AGGREGATES)}")
    snaps = np.asarray(snapshots)
    if snaps.ndim == 3:
        snaps = snaps[None]
    if snaps.ndim != 4 or snaps.shape[1] != len(SNAPSHOT_HOURS):
        raise SchemaError(
            f"expected {len(SNAPSHOT_HOURS)} snapshots per day (hours {SNAPSHOT_HOURS}), got shape {snaps.shape}"
        )
    out = {}
    for stat in WEATHER_AGGREGATES[quantity]:
        out[stat] = (snaps.min(axis=1) if stat == "min" else snaps.max(axis=1)).astype(np.float32)
    return out


def forward_fill_composites(composites: np.ndarray, composite_days: Sequence[int], n_days: int) -> np.ndarray:
    """Expand 8/16-day composites to daily layers.

    Each day takes the latest composite whose day index is <= that day; days
    before the first composite are NaN.
    """
    days = np.asarray(composite_days, dtype=np.int64)
    if composites.shape[0] != days.size:
        raise SchemaError(f"{composites.shape[0]} composites but {days.size} composite days")
    if np.any(np.diff(days) <= 0):
        raise SchemaError("composite days must be strictly increasing")
    idx = np.searchsorted(days, np.arange(n_days), side="right") - 1
    out = np.full((n_days, *composites.shape[1:]), np.nan, dtype=np.float32)
    valid = idx >= 0
    out[valid] = composites[idx[valid]]
    return out


def landcover_vintage(year: int) -> int:
    """Land-cover map used for ``year``: the latest vintage not after it (2006 before 2012)."""
    usable = [v for v in LANDCOVER_VINTAGES if v <= year]
    return usable[-1] if usable else LANDCOVER_VINTAGES[0]


def shift_satellite_forward(cube: Datacube) -> Datacube:
    """Delay every ``shift_forward`` variable by one day; day 0 becomes NaN.

    Returns a new cube sharing the untouched arrays.
    """
    if cube.attrs.get("satellite_shifted"):
        raise StateError("satellite variables are already shifted (header flag satellite_shifted=true)")
    dynamic = dict(cube.dynamic)
    shifted = []
    for v in cube.schema:
        if v.kind == "dynamic" and v.shift_forward:
            raw = cube.dynamic[v.name]
            out = np.empty_like(raw)
            out[0] = np.nan
            out[1:] = raw[:-1]
            dynamic[v.name] = out
            shifted.append(v.name)
    attrs = dict(cube.attrs, satellite_shifted=True, shifted_variables=shifted)
    return replace(cube, dynamic=dynamic, attrs=attrs)


# ---------------------------------------------------------------- fire events


@dataclass
class ActiveFireDetection:
    row: int
    col: int
    date: dt.date
    confidence: float = 1.0

    def to_dict(self) -> dict:
        return {"row": self.row, "col": self.col, "date": self.date.isoformat(), "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d: dict) -> ActiveFireDetection:
        return cls(int(d["row"]), int(d["col"]), dt.date.fromisoformat(d["date"]), float(d.get("confidence", 1.0)))


@dataclass
class BurnPerimeter:
    """A final burned-area polygon rasterised to cells, with its candidate date window."""

    event_id: str
    pixels: list[tuple[int, int]]
    window_start: dt.date
    window_end: dt.date
    area_ha: float


@dataclass
class FireEvent:
    event_id: str
    pixels: list[tuple[int, int]]
    start_date: dt.date
    area_ha: float

    def __post_init__(self):
        self.pixels = [(int(r), int(c)) for r, c in self.pixels]
        if not self.pixels:
            raise SchemaError(f"fire event {self.event_id} has an empty pixel set")

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "pixels": [list(p) for p in self.pixels],
            "start_date": self.start_date.isoformat(),
            "area_ha": self.area_ha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FireEvent:
        return cls(str(d["event_id"]), [tuple(p) for p in d["pixels"]], dt.date.fromisoformat(d["start_date"]), float(d["area_ha"]))


@dataclass
class Rejection:
    event_id: str
    reason: str


@dataclass
class StartDateResult:
    events: list[FireEvent] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)


def assign_fire_start_dates(
    perimeters: Iterable[BurnPerimeter], detections: Iterable[ActiveFireDetection]
) -> StartDateResult:
    """Date each perimeter by the earliest active-fire detection inside it.

    Perimeters with no detection inside their pixel set and date window, or
    with an area not above 30 ha, go to ``rejected`` with the reason.
    """
    by_pixel: dict[tuple[int, int], list[dt.date]] = {}
    for d in detections:
        by_pixel.setdefault((d.row, d.col), []).append(d.date)
    result = StartDateResult()
    for p in perimeters:
        if not p.area_ha > MIN_BURNED_AREA_HA:
            result.rejected.append(Rejection(p.event_id, f"area {p.area_ha} ha does not exceed {MIN_BURNED_AREA_HA} ha"))
            continue
        hits = [
            day
            for px in set(map(tuple, p.pixels))
            for day in by_pixel.get(px, ())
            if p.window_start <= day <= p.window_end
        ]
        if not hits:
            result.rejected.append(Rejection(p.event_id, "no active-fire detection inside perimeter and date window"))
            continue
        result.events.append(FireEvent(p.event_id, list(p.pixels), min(hits), p.area_ha))
    return result


def rasterize_targets(events: Iterable[FireEvent], grid: GridSpec, start_date: dt.date, n_days: int) -> np.ndarray:
    """Mark each event's full final perimeter on its start day only.

    Later burning days stay 0 so a model is never asked to predict fires that
    are already burning.
    """
    target = np.zeros((n_days, *grid.shape), dtype=np.float32)
    for ev in events:
        day = (ev.start_date - start_date).days
        if not 0 <= day < n_days:
            raise BoundsError(f"event {ev.event_id} starts {ev.start_date}, outside the cube date range")
        px = np.asarray(ev.pixels, dtype=np.int64)
        if np.any(px < 0) or np.any(px[:, 0] >= grid.n_rows) or np.any(px[:, 1] >= grid.n_cols):
            raise BoundsError(f"event {ev.event_id} has pixels outside the {grid.n_rows}x{grid.n_cols} grid")
        layer = target[day]
        overlap = int(layer[px[:, 0], px[:, 1]].sum())
        if overlap:
            log.warning("event %s overlaps %d already-labelled pixels on %s", ev.event_id, overlap, ev.start_date)
        layer[px[:, 0], px[:, 1]] = 1.0
    return target
