"""Synthetic cubes with a planted, known fire process.

Fields are spatially smooth noise plus a seasonal cycle. Fires ignite with a
logistic probability driven by the previous day's temperature, wind and
vegetation, by a discounted ten-day rain window (temporal signal) and by road
density around the pixel (spatial signal).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, special

from firedanger import rng as rngmod
from firedanger.datacube.cube import Datacube
from firedanger.datacube.harmonize import FireEvent, forward_fill_composites, rasterize_targets, shift_satellite_forward
from firedanger.datacube.schema import REFERENCE_SCHEMA, GridSpec
from firedanger.errors import ParameterError

MIN_DAYS = 30
# daily rain is noise above a seasonal threshold: base + amplitude * season
RAIN_THRESHOLD = (0.0, 0.3)
ROADS_SIGMA = 1.2
RAIN_AMOUNT_SIGMA = 0.5
LANDCOVER_CLASSES = {1: "forest", 2: "shrubland", 3: "agriculture", 4: "urban", 5: "sparse"}


@dataclass
class FireProcess:
    """Parameters of the planted ignition model.

    ``coefficients`` act on z-scored previous-day values. ``rate`` scales the
    ignition probability (0 disables fires).
    """

    rate: float = 1.0
    intercept: float = -15.6
    coefficients: dict[str, float] = field(
        default_factory=lambda: {"max_temp": 0.6, "max_u_wind": 0.6, "ndvi": -0.4}
    )
    memory_variable: str = "max_tp"
    memory_coef: float = -2.5  # on the discounted ten-day sum of the z-scored memory variable
    memory_decay: float = 0.6
    spatial_coef: float = 2.0
    spatial_window: int = 7
    mean_event_size: float = 4.0
    max_event_size: int = 30
    sea_fraction: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _smooth(rng: np.random.Generator, shape, sigma: float, ar: float = 0.0) -> np.ndarray:
    """Unit-variance noise, Gaussian-smoothed in space, AR(1) in time for 3-D shapes."""
    if len(shape) == 2:
        f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
        return (f / f.std()).astype(np.float32)
    t = shape[0]
    out = np.empty(shape, dtype=np.float32)
    innov = ndimage.gaussian_filter(rng.standard_normal(shape), (0, sigma, sigma), mode="wrap")
    innov = (innov / innov.std()).astype(np.float32)
    out[0] = innov[0]
    k = np.float32(np.sqrt(1.0 - ar * ar))
    ar = np.float32(ar)
    for i in range(1, t):
        out[i] = ar * out[i - 1] + k * innov[i]
    return out


def _zscore(a: np.ndarray) -> np.ndarray:
    v = a[np.isfinite(a)].astype(np.float64)
    return ((a - v.mean()) / (v.std() + 1e-12)).astype(np.float32)


def _discounted_window(x: np.ndarray, decay: float, days: int = 10) -> np.ndarray:
    """``sum_k decay**k * x[t-k]`` over the window of ``days`` ending on each day."""
    out = np.zeros(x.shape, dtype=np.float32)
    for k in range(days):
        out[k:] += np.float32(decay**k) * x[: x.shape[0] - k]
    return out


def _grow_event(rng: np.random.Generator, seed_px, size: int, blocked: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = blocked.shape
    pixels = [seed_px]
    taken = {seed_px}
    frontier = [seed_px]
    while len(pixels) < size and frontier:
        r, c = frontier[int(rng.integers(len(frontier)))]
        nbrs = [
            (r + dr, c + dc)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if 0 <= r + dr < rows and 0 <= c + dc < cols and (r + dr, c + dc) not in taken and not blocked[r + dr, c + dc]
        ]
        if not nbrs:
            frontier.remove((r, c))
            continue
        nxt = nbrs[int(rng.integers(len(nbrs)))]
        taken.add(nxt)
        pixels.append(nxt)
        frontier.append(nxt)
    return pixels


def _static_fields(seed: int, grid: GridSpec) -> dict[str, np.ndarray]:
    shape = grid.shape
    g = lambda name: rngmod.stream(seed, "synthetic", "static", name)  # noqa: E731
    dem = 900.0 + 450.0 * _smooth(g("dem"), shape, 10.0)
    dem = np.clip(dem, 0.0, None)
    gy, gx = np.gradient(dem, grid.cell_size)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    aspect = (np.degrees(np.arctan2(-gx, gy)) + 360.0) % 360.0
    roads = np.clip(0.6 + 0.8 * _smooth(g("roads"), shape, ROADS_SIGMA), 0.0, None)
    pop = np.exp(1.5 + 1.2 * _smooth(g("pop"), shape, 5.0))
    veg = _smooth(g("veg"), shape, 8.0)
    clc = np.full(shape, 5.0)
    clc[veg > -0.8] = 3.0
    clc[veg > 0.0] = 2.0
    clc[veg > 0.6] = 1.0
    clc[pop > np.quantile(pop, 0.95)] = 4.0
    out = {
        "dem": dem,
        "slope": slope,
        "aspect": aspect,
        "roads_density": roads,
        "population_density": pop,
        "clc": clc,
        "_veg": veg,
    }
    return {k: v.astype(np.float32) for k, v in out.items()}


def generate_synthetic_cube(
    seed: int,
    grid: GridSpec,
    n_days: int,
    process: FireProcess | None = None,
    start_date: dt.date = dt.date(2019, 1, 1),
) -> tuple[Datacube, list[FireEvent]]:
    """Build a reference-schema cube (satellite layers already shifted) and its fire events."""
    process = process or FireProcess()
    if n_days < MIN_DAYS:
        raise ParameterError(f"n_days must be >= {MIN_DAYS}, got {n_days}")
    if grid.n_rows < 2 or grid.n_cols < 2:
        raise ParameterError(f"degenerate grid {grid.n_rows}x{grid.n_cols}")
    if process.rate < 0:
        raise ParameterError(f"fire rate must be >= 0, got {process.rate}")

    shape3 = (n_days, *grid.shape)
    st = _static_fields(seed, grid)
    veg = st.pop("_veg")
    dyn_rng = lambda name: rngmod.stream(seed, "synthetic", "dynamic", name)  # noqa: E731

    doy = np.array([(start_date + dt.timedelta(days=i)).timetuple().tm_yday for i in range(n_days)], dtype=np.float64)
    # -1 mid-January, +1 mid-July
    season = (-np.cos(2 * np.pi * (doy - 15.0) / 365.25)).astype(np.float32)[:, None, None]

    arrays: dict[str, np.ndarray] = {}
    temp_anom = _smooth(dyn_rng("temp"), shape3, 8.0, ar=0.8)
    arrays["max_temp"] = 295.0 + 8.0 * season + 3.0 * temp_anom - 0.0065 * st["dem"]
    arrays["min_temp"] = arrays["max_temp"] - 10.0 - 1.5 * np.abs(_smooth(dyn_rng("dtr"), shape3, 8.0, ar=0.5))
    for comp in ("u", "v"):
        w = _smooth(dyn_rng(f"wind_{comp}"), shape3, 10.0, ar=0.6)
        gust = np.abs(_smooth(dyn_rng(f"gust_{comp}"), shape3, 4.0))
        arrays[f"max_{comp}_wind"] = 1.0 + 3.0 * w + gust
        arrays[f"min_{comp}_wind"] = arrays[f"max_{comp}_wind"] - 2.0 - gust
    # rain occurrence is regional; amounts are log-normal, so a window mean says little about timing
    wet = _smooth(dyn_rng("rain"), shape3, 6.0, ar=0.3) > RAIN_THRESHOLD[0] + RAIN_THRESHOLD[1] * season
    amount = np.exp(RAIN_AMOUNT_SIGMA * _smooth(dyn_rng("rain_amount"), shape3, 3.0)) * 2e-3
    arrays["max_tp"] = np.where(wet, amount, 0.0)
    del wet, amount

    veg_anom = _smooth(dyn_rng("veg_anom"), shape3, 6.0, ar=0.95)
    green = 0.5 + 0.25 * np.tanh(veg)[None] - 0.08 * season + 0.06 * veg_anom
    sat = {
        "ndvi": green,
        "evi": 0.75 * green + 0.02 * _smooth(dyn_rng("evi"), shape3, 3.0),
        "fpar": np.clip(0.9 * green - 0.05, 0.0, 1.0),
        "lai": np.clip(5.0 * green - 1.0, 0.0, None),
        "lst_day": arrays["max_temp"] + 4.0 + 1.5 * _smooth(dyn_rng("lst_d"), shape3, 4.0),
        "lst_night": arrays["min_temp"] - 2.0 + 1.0 * _smooth(dyn_rng("lst_n"), shape3, 4.0),
    }
    # 16-day (NDVI/EVI) and 8-day (LAI/Fpar) composites made daily by forward fill
    for name, period in (("ndvi", 16), ("evi", 16), ("fpar", 8), ("lai", 8)):
        comp_days = np.arange(0, n_days, period)
        sat[name] = forward_fill_composites(sat[name][comp_days], comp_days, n_days)
    arrays.update(sat)
    arrays.update(st)

    if process.sea_fraction > 0:
        sea = _smooth(rngmod.stream(seed, "synthetic", "sea"), grid.shape, 12.0)
        sea = sea < np.quantile(sea, process.sea_fraction)
        for name, arr in arrays.items():
            if name == "clc":
                continue
            if arr.ndim == 3:
                arr[:, sea] = np.nan
            else:
                arr[sea] = np.nan
    else:
        sea = np.zeros(grid.shape, dtype=bool)

    arrays["burned"] = np.zeros(shape3, dtype=np.float32)
    for k in list(arrays):
        arrays[k] = arrays[k].astype(np.float32, copy=False)
    dynamic = {v.name: arrays[v.name] for v in REFERENCE_SCHEMA if v.kind == "dynamic"}
    static = {v.name: arrays[v.name] for v in REFERENCE_SCHEMA if v.kind == "static"}
    del arrays
    cube = Datacube(grid, list(REFERENCE_SCHEMA), start_date, n_days, dynamic, static, {})
    cube = shift_satellite_forward(cube)

    events = plant_fires(cube, process, seed, blocked=sea)
    cube.dynamic["burned"] = rasterize_targets(events, grid, start_date, n_days)
    cube.attrs.update(
        {
            "synthetic": True,
            "seed": int(seed),
            "fire_process": process.to_dict(),
            "landcover_classes": {str(k): v for k, v in LANDCOVER_CLASSES.items()},
        }
    )
    return cube, events


def ignition_logit(cube: Datacube, process: FireProcess) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-day logit of ignition for target day ``t + 1`` from features on days ``<= t``.

    Returns the logit array indexed by the *input* day ``t`` plus the z-scored
    driver layers, which tests use to verify the planted coefficients.
    """
    drivers = {name: _zscore(cube.dynamic[name]) for name in process.coefficients}
    memory = _discounted_window(_zscore(cube.dynamic[process.memory_variable]), process.memory_decay)
    k = process.spatial_window
    roads = cube.static["roads_density"].astype(np.float64)
    land = np.isfinite(roads)
    # neighbourhood mean over land cells only, so sea does not blank the coast
    total = ndimage.uniform_filter(np.where(land, roads, 0.0), size=k, mode="nearest")
    count = ndimage.uniform_filter(land.astype(np.float64), size=k, mode="nearest")
    with np.errstate(invalid="ignore", divide="ignore"):
        neigh = np.where(land & (count > 0), total / count, np.nan)
    spatial = _zscore(neigh)
    z = np.full(cube.target.shape, process.intercept, dtype=np.float32)
    for name, coef in process.coefficients.items():
        z += coef * drivers[name]
    z += process.memory_coef * memory
    z += process.spatial_coef * spatial[None]
    drivers["memory"] = memory
    drivers["road_neighbourhood"] = spatial
    return z, drivers


def plant_fires(cube: Datacube, process: FireProcess, seed: int, blocked: np.ndarray | None = None) -> list[FireEvent]:
    """Draw ignitions and grow each into a perimeter. Deterministic in ``seed``."""
    if process.rate == 0:
        return []
    z, _ = ignition_logit(cube, process)
    prob = process.rate * special.expit(z)
    rng = rngmod.stream(seed, "synthetic", "fires")
    grid = cube.grid
    blocked = np.zeros(grid.shape, dtype=bool) if blocked is None else blocked
    cell_ha = grid.cell_size**2 / 1e4
    events: list[FireEvent] = []
    draws = rng.random(prob.shape)
    # the ten-day input window ending on day t must exist and avoid the NaN satellite day 0
    first_input_day = 10
    for t in range(first_input_day, cube.n_days - 1):
        ign = np.argwhere((draws[t] < prob[t]) & ~blocked)
        if ign.size == 0:
            continue
        burned_today = blocked.copy()
        for r, c in ign:
            if burned_today[r, c]:
                continue
            size = min(process.max_event_size, int(rng.geometric(1.0 / process.mean_event_size)))
            pixels = _grow_event(rng, (int(r), int(c)), size, burned_today)
            for pr, pc in pixels:
                burned_today[pr, pc] = True
            events.append(
                FireEvent(f"syn-{len(events):05d}", pixels, cube.date_of(t + 1), len(pixels) * cell_ha)
            )
    return events
