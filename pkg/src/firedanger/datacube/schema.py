"""Grid definition and the variable schema of the harmonized cube."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from firedanger.errors import GridError, SchemaError

KINDS = ("static", "dynamic")
ROLES = ("input", "stratifier", "target")
RESAMPLE_RULES = ("bilinear", "mean", "mode", "nearest")


@dataclass(frozen=True)
class GridSpec:
    """A north-up raster grid. ``origin_x``/``origin_y`` is the top-left corner.

    Row 0 is the northernmost row; cell ``(r, c)`` has its centre at
    ``(origin_x + (c + .5) * cell_size, origin_y - (r + .5) * cell_size)``.
    """

    n_rows: int
    n_cols: int
    origin_x: float = 0.0
    origin_y: float = 0.0
    cell_size: float = 1000.0
    crs: str = "EPSG:2100"

    def __post_init__(self):
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise GridError(f"grid must have positive dimensions, got {self.n_rows}x{self.n_cols}")
        if not self.cell_size > 0:
            raise GridError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        return cls(**d)


# 700 km x 562 km at 1 km, Greek Grid
REFERENCE_GRID = GridSpec(n_rows=562, n_cols=700, origin_x=100_000.0, origin_y=4_640_000.0, cell_size=1000.0)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    role: str = "input"
    units: str = ""
    resample_rule: str = "nearest"
    shift_forward: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"{self.name}: role must be one of {ROLES}, got {self.role!r}")
        if self.resample_rule not in RESAMPLE_RULES:
            raise SchemaError(f"{self.name}: resample_rule must be one of {RESAMPLE_RULES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> VariableSpec:
        return cls(**d)


def _dyn(name, units, rule, shift=False):
    return VariableSpec(name, "dynamic", "input", units, rule, shift)


def _sta(name, units, rule, role="input"):
    return VariableSpec(name, "static", role, units, rule)


REFERENCE_SCHEMA: tuple[VariableSpec, ...] = (
    # weather: daily aggregates of five snapshots, available from forecasts, not shifted
    _dyn("max_temp", "K", "bilinear"),
    _dyn("min_temp", "K", "bilinear"),
    _dyn("max_u_wind", "m/s", "bilinear"),
    _dyn("min_u_wind", "m/s", "bilinear"),
    _dyn("max_v_wind", "m/s", "bilinear"),
    _dyn("min_v_wind", "m/s", "bilinear"),
    _dyn("max_tp", "m", "bilinear"),
    # satellite products: available the day after acquisition
    _dyn("fpar", "1", "nearest", shift=True),
    _dyn("lai", "m2/m2", "nearest", shift=True),
    _dyn("lst_day", "K", "nearest", shift=True),
    _dyn("lst_night", "K", "nearest", shift=True),
    _dyn("ndvi", "1", "nearest", shift=True),
    _dyn("evi", "1", "nearest", shift=True),
    _sta("clc", "class", "mode", role="stratifier"),
    _sta("dem", "m", "mean"),
    _sta("aspect", "deg", "mean"),
    _sta("slope", "deg", "mean"),
    _sta("roads_density", "km/km2", "mean"),
    _sta("population_density", "people/km2", "mean"),
    VariableSpec("burned", "dynamic", "target", "flag", "nearest"),
)


def validate_schema(schema: Sequence[VariableSpec]) -> None:
    names = [v.name for v in schema]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate variable names in schema: {names}")
    targets = [v.name for v in schema if v.role == "target"]
    if len(targets) != 1:
        raise SchemaError(f"schema needs exactly one variable with role=target, found {targets}")
    strat = [v.name for v in schema if v.role == "stratifier"]
    if len(strat) != 1:
        raise SchemaError(f"schema needs exactly one variable with role=stratifier, found {strat}")
    if strat and schema[names.index(strat[0])].kind != "static":
        raise SchemaError(f"stratifier {strat[0]} must be static")


def feature_specs(schema: Iterable[VariableSpec]) -> list[VariableSpec]:
    """All non-target variables (the cube's features)."""
    return [v for v in schema if v.role != "target"]


def input_names(schema: Iterable[VariableSpec]) -> list[str]:
    """Model inputs in schema order: every feature except the stratifier."""
    return [v.name for v in schema if v.role == "input"]


def dynamic_input_names(schema: Iterable[VariableSpec]) -> list[str]:
    return [v.name for v in schema if v.role == "input" and v.kind == "dynamic"]


def target_name(schema: Iterable[VariableSpec]) -> str:
    return next(v.name for v in schema if v.role == "target")


def stratifier_name(schema: Iterable[VariableSpec]) -> str:
    return next(v.name for v in schema if v.role == "stratifier")


def schema_hash(schema: Iterable[VariableSpec]) -> str:
    canon = json.dumps([v.to_dict() for v in schema], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
