"""The in-memory datacube and its PFC on-disk format."""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from firedanger.binfmt import read_header, write_container
from firedanger.datacube.schema import (
    GridSpec,
    VariableSpec,
    schema_hash,
    stratifier_name,
    target_name,
    validate_schema,
)
from firedanger.errors import BoundsError, FormatError, GridError, SchemaError

log = logging.getLogger(__name__)

MAGIC = b"PFC1"
_F32 = np.dtype("<f4")


@dataclass
class Datacube:
    """Co-registered daily rasters. Missing values are NaN.

    ``dynamic[name]`` is ``[T, rows, cols]``; ``static[name]`` is ``[rows, cols]``.
    ``attrs`` carries header metadata such as ``satellite_shifted``.
    """

    grid: GridSpec
    schema: list[VariableSpec]
    start_date: dt.date
    n_days: int
    dynamic: dict[str, np.ndarray]
    static: dict[str, np.ndarray]
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.schema = list(self.schema)
        if self.n_days <= 0:
            raise SchemaError(f"n_days must be positive, got {self.n_days}")
        for v in self.schema:
            store = self.dynamic if v.kind == "dynamic" else self.static
            if v.name not in store:
                raise SchemaError(f"variable {v.name!r} ({v.role}) missing from cube data")
            arr = store[v.name]
            want = (self.n_days, *self.grid.shape) if v.kind == "dynamic" else self.grid.shape
            if arr.shape != want:
                raise GridError(f"{v.name}: array shape {arr.shape} does not match grid {want}")
        self.attrs.setdefault("satellite_shifted", False)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.n_days - 1)

    @property
    def date_range(self) -> tuple[dt.date, dt.date]:
        return self.start_date, self.end_date

    def date_of(self, day: int) -> dt.date:
        return self.start_date + dt.timedelta(days=int(day))

    def day_index(self, date: dt.date) -> int:
        day = (date - self.start_date).days
        if not 0 <= day < self.n_days:
            raise BoundsError(f"{date} is outside the cube range {self.start_date}..{self.end_date}")
        return day

    def spec(self, name: str) -> VariableSpec:
        for v in self.schema:
            if v.name == name:
                return v
        raise SchemaError(f"no variable named {name!r}")

    def array(self, name: str) -> np.ndarray:
        return self.dynamic[name] if self.spec(name).kind == "dynamic" else self.static[name]

    @property
    def target(self) -> np.ndarray:
        return self.dynamic[target_name(self.schema)]

    @property
    def landcover(self) -> np.ndarray:
        return self.static[stratifier_name(self.schema)]

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.schema)

    def header(self) -> dict:
        return {
            "format": "PFC1",
            "grid": self.grid.to_dict(),
            "schema": [v.to_dict() for v in self.schema],
            "start_date": self.start_date.isoformat(),
            "end_date": self.end_date.isoformat(),
            "n_days": self.n_days,
            "array_order": {"dynamic": ["time", "row", "col"], "static": ["row", "col"]},
            "orientation": "row 0 is north; cells addressed (row, col)",
            "schema_hash": self.schema_hash,
            "attrs": self.attrs,
        }


def _block_shape(cube_header: dict, spec: dict) -> tuple[int, ...]:
    g = cube_header["grid"]
    if spec["kind"] == "dynamic":
        return (cube_header["n_days"], g["n_rows"], g["n_cols"])
    return (g["n_rows"], g["n_cols"])


def save_cube(cube: Datacube, path: str | os.PathLike, validate: bool = True) -> None:
    """Write ``cube`` in PFC format: one float32 block per variable, schema order.

    ``validate=False`` allows single-layer products such as danger maps, whose
    schema has no target or stratifier.
    """
    if validate:
        validate_schema(cube.schema)

    def blocks():
        for v in cube.schema:
            arr = cube.array(v.name)
            yield np.ascontiguousarray(arr, dtype=_F32).tobytes()

    write_container(path, MAGIC, cube.header(), blocks())


def load_cube(path: str | os.PathLike, mmap: bool = False) -> Datacube:
    """Read a PFC file. ``mmap=True`` maps blocks read-only instead of copying."""
    _, header, offset, size = read_header(path, MAGIC)
    try:
        schema = [VariableSpec.from_dict(v) for v in header["schema"]]
        grid = GridSpec.from_dict(header["grid"])
        n_days = int(header["n_days"])
        start = dt.date.fromisoformat(header["start_date"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PFC header ({exc})", 8) from exc
    shapes = [_block_shape(header, v) for v in header["schema"]]
    expected = offset + sum(int(np.prod(s)) * 4 for s in shapes)
    if size != expected:
        n_blocks = (size - offset) / (int(np.prod(shapes[0])) * 4) if shapes else 0
        raise FormatError(
            f"{path}: size mismatch, header declares {len(schema)} variables "
            f"({expected - offset} payload bytes) but payload holds {size - offset} bytes (~{n_blocks:.2f} blocks)",
            min(size, expected),
        )
    dynamic: dict[str, np.ndarray] = {}
    static: dict[str, np.ndarray] = {}
    pos = offset
    raw = np.memmap(path, dtype=np.uint8, mode="r") if mmap else None
    with open(path, "rb") as fh:
        for v, shape in zip(schema, shapes):
            count = int(np.prod(shape))
            if raw is not None:
                arr = raw[pos : pos + count * 4].view(_F32).reshape(shape)
            else:
                fh.seek(pos)
                arr = np.fromfile(fh, dtype=_F32, count=count).reshape(shape).astype(np.float32, copy=False)
            (dynamic if v.kind == "dynamic" else static)[v.name] = arr
            pos += count * 4
    return Datacube(grid, schema, start, n_days, dynamic, static, dict(header.get("attrs", {})))


# ---------------------------------------------------------------- sidecars


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{lineno}: invalid JSON line: {exc}") from exc
    return out


def cube_from_arrays(
    grid: GridSpec,
    schema: Sequence[VariableSpec],
    start_date: dt.date,
    arrays: dict[str, np.ndarray],
    attrs: dict | None = None,
) -> Datacube:
    """Assemble a cube from a flat ``name -> array`` mapping (float32 copies)."""
    dynamic, static = {}, {}
    n_days = None
    for v in schema:
        if v.name not in arrays:
            raise SchemaError(f"variable {v.name!r} (role={v.role}) has no source array")
        arr = np.asarray(arrays[v.name], dtype=np.float32)
        if v.kind == "dynamic":
            n_days = arr.shape[0] if n_days is None else n_days
            dynamic[v.name] = arr
        else:
            static[v.name] = arr
    if n_days is None:
        raise SchemaError("schema has no dynamic variables")
    return Datacube(grid, list(schema), start_date, n_days, dynamic, static, dict(attrs or {}))

