"""Harmonized datacube: grid, schema, transforms, PFC format, synthetic cubes."""

from firedanger.datacube.cube import Datacube, cube_from_arrays, load_cube, read_jsonl, save_cube, write_jsonl
from firedanger.datacube.harmonize import (
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
from firedanger.datacube.schema import (
    REFERENCE_GRID,
    REFERENCE_SCHEMA,
    GridSpec,
    VariableSpec,
    dynamic_input_names,
    input_names,
    schema_hash,
)
from firedanger.datacube.synthetic import FireProcess, generate_synthetic_cube

__all__ = [
    "ActiveFireDetection",
    "BurnPerimeter",
    "Datacube",
    "FireEvent",
    "FireProcess",
    "GridSpec",
    "REFERENCE_GRID",
    "REFERENCE_SCHEMA",
    "Raster",
    "VariableSpec",
    "aggregate_daily_weather",
    "assign_fire_start_dates",
    "cube_from_arrays",
    "dynamic_input_names",
    "forward_fill_composites",
    "generate_synthetic_cube",
    "input_names",
    "landcover_vintage",
    "load_cube",
    "rasterize_targets",
    "read_jsonl",
    "resample_to_grid",
    "save_cube",
    "schema_hash",
    "shift_satellite_forward",
    "write_jsonl",
]
