import datetime as dt
import sys

import numpy as np
import pytest

from firedanger.datacube import REFERENCE_SCHEMA, GridSpec, cube_from_arrays

START = dt.date(2019, 1, 1)


def make_cube(n_days=40, rows=12, cols=10, seed=0, start=START, classes=(1, 2, 3)):
    """A NaN-free random reference-schema cube with no fires."""
    rng = np.random.default_rng(seed)
    grid = GridSpec(rows, cols)
    arrays = {}
    for v in REFERENCE_SCHEMA:
        shape = (n_days, rows, cols) if v.kind == "dynamic" else (rows, cols)
        arrays[v.name] = rng.normal(size=shape) + 5.0
    arrays["burned"] = np.zeros((n_days, rows, cols))
    arrays["clc"] = rng.choice(np.asarray(classes), size=(rows, cols))
    return cube_from_arrays(grid, REFERENCE_SCHEMA, start, arrays)


def make_fire_cube(n_days=200, rows=16, cols=16, n_events=30, seed=0, start=dt.date(2019, 10, 1)):
    """A random cube with single-pixel fires that follow a hot previous day."""
    cube = make_cube(n_days=n_days, rows=rows, cols=cols, seed=seed, start=start)
    rng = np.random.default_rng(seed + 1)
    for _ in range(n_events):
        d = int(rng.integers(12, n_days))
        r, c = int(rng.integers(rows)), int(rng.integers(cols))
        cube.dynamic["burned"][d, r, c] = 1.0
        cube.dynamic["max_temp"][d - 1, r, c] += 4.0
    return cube


@pytest.fixture(scope="session")
def experiment(tmp_path_factory):
    """Samples for every modality plus small trained RF and LSTM checkpoints."""
    from firedanger.neural import TrainConfig
    from firedanger.pipeline import ExperimentConfig, extract_experiment, train_checkpoint
    from firedanger.forest import ForestParams
    from firedanger.sampling import SplitConfig, load_samples

    out = tmp_path_factory.mktemp("experiment")
    cube = make_fire_cube()
    cfg = ExperimentConfig(SplitConfig(train_years=(2019,), validation_years=(), test_years=(2020,)), seed=3)
    res = extract_experiment(cube, cfg, out)
    rf = out / "rf.prf"
    train_checkpoint("rf", load_samples(res.paths["pixel"]["train"]), rf, seed=1, forest_params=ForestParams(n_trees=10))
    lstm = out / "lstm.pmc"
    train_checkpoint(
        "lstm",
        load_samples(res.paths["temporal"]["train"]),
        lstm,
        seed=1,
        train_config=TrainConfig.reference("lstm", epochs=3, seed=1),
        model_overrides={"hidden": 8, "head": [8, 4]},
    )
    return {"cube": cube, "result": res, "dir": out, "rf": rf, "lstm": lstm}


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.result_line(n))
