"""Assemble a reference-schema cube from source rasters stored as PFC files.

Sources are PFC cubes on their own grids (same projection). Each target
variable is filled in a fixed order: resample to the cube grid, aggregate
hourly weather snapshots, forward-fill satellite composites, shift satellite
layers forward one day, then rasterize fire events into the target layer.

Source conventions:

* a variable with the target name is used directly;
* weather aggregates come from snapshot variables ``<quantity>@<HH>`` for the
  five snapshot hours, e.g. ``temperature@04`` ... ``temperature@20``;
* a source cube whose attrs carry ``composite_days`` (day offsets relative to
  the build start date, one per source layer) holds 8/16-day composites;
* land cover may be given as ``clc`` or as per-vintage ``clc_<year>``.
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field

import numpy as np

from firedanger.datacube.cube import Datacube, load_cube, read_jsonl
from firedanger.datacube.harmonize import (
    SNAPSHOT_HOURS,
    WEATHER_AGGREGATES,
    ActiveFireDetection,
    BurnPerimeter,
    FireEvent,
    Raster,
    aggregate_daily_weather,
    assign_fire_start_dates,
    forward_fill_composites,
    landcover_vintage,
    rasterize_targets,
    resample_to_grid,
    shift_satellite_forward,
)
from firedanger.datacube.schema import REFERENCE_GRID, REFERENCE_SCHEMA, GridSpec, VariableSpec
from firedanger.errors import BoundsError, ConfigError, SchemaError

# cube variable -> (weather quantity, daily statistic)
WEATHER_SOURCES = {
    f"{stat}_{short}": (quantity, stat)
    for quantity, short in (("temperature", "temp"), ("u_wind", "u_wind"), ("v_wind", "v_wind"), ("precipitation", "tp"))
    for stat in WEATHER_AGGREGATES[quantity]
}


@dataclass
class BuildConfig:
    start_date: dt.date
    n_days: int
    sources: list[str]
    events: str | None = None  # dated events (JSON lines of FireEvent)
    perimeters: str | None = None  # JSON lines of burn perimeters, dated by detections
    detections: str | None = None
    grid: GridSpec = REFERENCE_GRID
    schema: list[VariableSpec] = field(default_factory=lambda: list(REFERENCE_SCHEMA))

    @classmethod
    def from_dict(cls, d: dict) -> BuildConfig:
        known = {"start_date", "n_days", "sources", "events", "perimeters", "detections", "grid", "seed"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown build config field(s): {sorted(extra)}")
        for key in ("start_date", "n_days", "sources"):
            if key not in d:
                raise ConfigError(f"build config is missing required field {key!r}")
        try:
            start = dt.date.fromisoformat(d["start_date"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"start_date: {exc}") from exc
        if not isinstance(d["n_days"], int) or d["n_days"] < 1:
            raise ConfigError(f"n_days must be a positive integer, got {d['n_days']!r}")
        if not isinstance(d["sources"], list) or not d["sources"]:
            raise ConfigError("sources must be a non-empty list of PFC paths")
        try:
            grid = GridSpec.from_dict(d["grid"]) if "grid" in d else REFERENCE_GRID
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid: {exc}") from exc
        return cls(start, d["n_days"], list(d["sources"]), d.get("events"), d.get("perimeters"), d.get("detections"), grid)


def _day_slice(src: Datacube, start: dt.date, n_days: int, name: str) -> slice:
    first = (start - src.start_date).days
    if first < 0 or first + n_days > src.n_days:
        raise BoundsError(
            f"source for {name!r} covers {src.start_date}..{src.end_date}, "
            f"build needs {start}..{start + dt.timedelta(days=n_days - 1)}"
        )
    return slice(first, first + n_days)


def _resample_stack(stack: np.ndarray, grid: GridSpec, dst: GridSpec, rule: str) -> np.ndarray:
    return np.stack([resample_to_grid(Raster(np.asarray(layer), grid), dst, rule) for layer in stack])


class _Sources:
    def __init__(self, paths: list[str]):
        self.cubes: list[tuple[str, Datacube]] = []
        for p in paths:
            if not os.path.exists(p):
                raise ConfigError(f"sources: file not found: {p}")
            self.cubes.append((p, load_cube(p, mmap=True)))

    def find(self, name: str) -> tuple[str, Datacube] | None:
        for path, cube in self.cubes:
            if any(v.name == name for v in cube.schema):
                return path, cube
        return None


def build_cube(config: BuildConfig) -> Datacube:
    """Harmonize the configured sources into one cube; provenance goes into attrs."""
    src = _Sources(config.sources)
    grid, start, n = config.grid, config.start_date, config.n_days
    dynamic: dict[str, np.ndarray] = {}
    static: dict[str, np.ndarray] = {}
    provenance: dict[str, str] = {}
    target = None
    for v in config.schema:
        if v.role == "target":
            target = v
            continue
        if v.kind == "static":
            static[v.name], provenance[v.name] = _static_layer(src, v, grid, start.year)
        else:
            dynamic[v.name], provenance[v.name] = _dynamic_layer(src, v, grid, start, n)
    if target is None:
        raise SchemaError("schema has no variable with role=target")
    events = _events(config, target)
    dynamic[target.name] = np.zeros((n, *grid.shape), dtype=np.float32)
    attrs = {
        "build": {
            "start_date": start.isoformat(),
            "n_days": n,
            "sources": list(config.sources),
            "events": config.events,
            "perimeters": config.perimeters,
            "detections": config.detections,
            "grid": grid.to_dict(),
        },
        "provenance": provenance,
    }
    cube = Datacube(grid, list(config.schema), start, n, dynamic, static, attrs)
    cube = shift_satellite_forward(cube)
    cube.dynamic[target.name] = rasterize_targets(events, grid, start, n)
    cube.attrs["n_events"] = len(events)
    return cube


def _static_layer(src: _Sources, v: VariableSpec, grid: GridSpec, year: int) -> tuple[np.ndarray, str]:
    names = [v.name]
    if v.role == "stratifier":
        names.append(f"{v.name}_{landcover_vintage(year)}")
    for name in names:
        hit = src.find(name)
        if hit:
            path, cube = hit
            layer = np.asarray(cube.array(name))
            if layer.ndim != 2:
                raise SchemaError(f"{path}: {name!r} must be static for {v.name!r} ({v.role})")
            return resample_to_grid(Raster(layer, cube.grid), grid, v.resample_rule), f"{path}:{name} resample={v.resample_rule}"
    raise ConfigError(f"no source provides {v.name!r} (role={v.role}); looked for {names}")


def _dynamic_layer(src: _Sources, v: VariableSpec, grid: GridSpec, start: dt.date, n: int) -> tuple[np.ndarray, str]:
    hit = src.find(v.name)
    if hit:
        path, cube = hit
        comp_days = cube.attrs.get("composite_days")
        if comp_days is not None:
            layers = _resample_stack(np.asarray(cube.dynamic[v.name]), cube.grid, grid, v.resample_rule)
            return forward_fill_composites(layers, comp_days, n), f"{path}:{v.name} resample={v.resample_rule} forward_fill"
        days = _day_slice(cube, start, n, v.name)
        return _resample_stack(cube.dynamic[v.name][days], cube.grid, grid, v.resample_rule), f"{path}:{v.name} resample={v.resample_rule}"
    if v.name in WEATHER_SOURCES:
        quantity, stat = WEATHER_SOURCES[v.name]
        snap_names = [f"{quantity}@{h:02d}" for h in SNAPSHOT_HOURS]
        hits = [src.find(s) for s in snap_names]
        if all(hits):
            snaps = []
            for name, (path, cube) in zip(snap_names, hits):
                days = _day_slice(cube, start, n, name)
                snaps.append(_resample_stack(cube.dynamic[name][days], cube.grid, grid, v.resample_rule))
            daily = aggregate_daily_weather(np.stack(snaps, axis=1), quantity)[stat]
            return daily, f"{','.join(snap_names)} resample={v.resample_rule} aggregate={stat}"
        raise ConfigError(f"no source provides {v.name!r} (role={v.role}) or all of {snap_names}")
    raise ConfigError(f"no source provides {v.name!r} (role={v.role})")


def _events(config: BuildConfig, target: VariableSpec) -> list[FireEvent]:
    if config.events:
        if not os.path.exists(config.events):
            raise ConfigError(f"events: file not found: {config.events}")
        return [FireEvent.from_dict(d) for d in read_jsonl(config.events)]
    if config.perimeters and config.detections:
        for key in ("perimeters", "detections"):
            if not os.path.exists(getattr(config, key)):
                raise ConfigError(f"{key}: file not found: {getattr(config, key)}")
        perims = [
            BurnPerimeter(
                str(d["event_id"]),
                [tuple(p) for p in d["pixels"]],
                dt.date.fromisoformat(d["window_start"]),
                dt.date.fromisoformat(d["window_end"]),
                float(d["area_ha"]),
            )
            for d in read_jsonl(config.perimeters)
        ]
        dets = [ActiveFireDetection.from_dict(d) for d in read_jsonl(config.detections)]
        return assign_fire_start_dates(perims, dets).events
    raise ConfigError(
        f"no source for target variable {target.name!r} (role=target): set 'events' or both 'perimeters' and 'detections'"
    )
