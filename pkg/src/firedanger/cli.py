"""Command-line entry point: ``firedanger <command> [options]``.

Exit codes: 0 success, 1 runtime failure (divergence, corrupt file),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("firedanger")


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def _limit_threads(n: int | None) -> None:
    # must run before numpy loads its BLAS
    if n is None:
        return
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def read_config(path: str | None) -> dict:
    """Load a JSON config; parse errors report the file, line and column."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"--config: file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"--config {path}: top level must be a JSON object")
    return cfg


def _seed(args, cfg: dict) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise UsageError(f"seed must be a non-negative integer, got {seed!r}")
    return seed


def _need_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what}: file not found: {path}")
    return p


def _need_out(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command}: --out PATH is required")
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _check_keys(cfg: dict, known: set[str], where: str) -> None:
    extra = sorted(set(cfg) - known)
    if extra:
        raise UsageError(f"{where}: unknown field(s) {extra}; expected a subset of {sorted(known)}")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    from firedanger.datacube import FireProcess, GridSpec, generate_synthetic_cube, save_cube, write_jsonl

    cfg = read_config(args.config)
    _check_keys(cfg, {"grid", "n_days", "start_date", "fire_process", "seed"}, "synth config")
    seed = _seed(args, cfg)
    try:
        grid = GridSpec.from_dict({"n_rows": 128, "n_cols": 128, **cfg.get("grid", {})})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"synth config field 'grid': {exc}") from exc
    n_days = cfg.get("n_days", 730)
    if not isinstance(n_days, int) or n_days < 30:
        raise UsageError(f"synth config field 'n_days' must be an integer >= 30, got {n_days!r}")
    try:
        start = dt.date.fromisoformat(cfg.get("start_date", "2019-01-01"))
    except ValueError as exc:
        raise UsageError(f"synth config field 'start_date': {exc}") from exc
    try:
        process = FireProcess(**cfg.get("fire_process", {}))
    except TypeError as exc:
        raise UsageError(f"synth config field 'fire_process': {exc}") from exc
    out = _need_out(args)
    cube, events = generate_synthetic_cube(seed, grid, n_days, process, start)
    cube.attrs["config"] = {**cfg, "seed": seed}
    save_cube(cube, out)
    sidecar = out.with_suffix(".events.jsonl")
    n = write_jsonl(sidecar, (e.to_dict() for e in events))
    print(json.dumps({"cube": str(out), "events": str(sidecar), "n_events": n, "seed": seed}))
    return EXIT_OK


def cmd_build(args) -> int:
    from firedanger.datacube import save_cube
    from firedanger.datacube.build import BuildConfig, build_cube

    cfg = read_config(args.config)
    if not cfg:
        raise UsageError("build: --config PATH is required")
    seed = _seed(args, cfg)
    config = BuildConfig.from_dict(cfg)
    out = _need_out(args)
    cube = build_cube(config)
    cube.attrs["config"] = {**cfg, "seed": seed}
    save_cube(cube, out)
    print(json.dumps({"cube": str(out), "schema_hash": cube.schema_hash, "n_events": cube.attrs["n_events"]}))
    return EXIT_OK


def cmd_extract(args) -> int:
    from firedanger.datacube import load_cube
    from firedanger.pipeline import ExperimentConfig, extract_experiment

    cube_path = _need_file(args.cube, "cube")
    cfg = read_config(args.config)
    cfg["seed"] = _seed(args, cfg)
    if args.modality:
        cfg["modalities"] = args.modality
    config = ExperimentConfig.from_dict(cfg)
    out = _need_out(args)
    cube = load_cube(cube_path, mmap=True)
    result = extract_experiment(cube, config, out)
    print(json.dumps({s: result.summary.to_dict()[s]["summary"] for s in ("train", "validation", "test")}))
    return EXIT_OK


def cmd_train(args) -> int:
    from firedanger.forest import ForestParams
    from firedanger.neural.train import REFERENCE_HYPERPARAMETERS, TrainConfig
    from firedanger.pipeline import check_modality, train_checkpoint
    from firedanger.sampling import load_samples

    cfg = read_config(args.config)
    _check_keys(cfg, {"architecture", "train", "model", "forest", "seed"}, "train config")
    arch = args.arch or cfg.get("architecture")
    if arch is None:
        raise UsageError("train: set --arch or the config field 'architecture'")
    seed = _seed(args, cfg)
    samples = load_samples(_need_file(args.samples, "samples"), mmap=True)
    val = load_samples(_need_file(args.val, "--val"), mmap=True) if args.val else None
    check_modality(arch, samples)
    out = _need_out(args)
    train_cfg = None
    forest = None
    if arch == "rf":
        try:
            forest = ForestParams(**cfg.get("forest", {}))
        except TypeError as exc:
            raise UsageError(f"train config field 'forest': {exc}") from exc
    else:
        fields = {**REFERENCE_HYPERPARAMETERS[arch], **cfg.get("train", {}), "seed": seed}
        if args.epochs is not None:
            fields["epochs"] = args.epochs
        try:
            train_cfg = TrainConfig(**fields)
        except TypeError as exc:
            raise UsageError(f"train config field 'train': {exc}") from exc
    result = train_checkpoint(arch, samples, out, seed, train_cfg, cfg.get("model"), forest, val)
    summary = {"checkpoint": str(out), "architecture": arch, "seed": seed}
    if result is not None:
        log_path = out.with_suffix(".log.jsonl")
        with open(log_path, "w") as fh:
            for row in result.log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        summary.update(log=str(log_path), epochs=len(result.log), best_epoch=result.best_epoch)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    from firedanger.datacube import write_jsonl
    from firedanger.evaluation import evaluate, load_predictor
    from firedanger.sampling import load_samples

    predictor = load_predictor(_need_file(args.checkpoint, "checkpoint"))
    samples = load_samples(_need_file(args.samples, "samples"), mmap=True)
    if len(samples) == 0:
        raise UsageError(f"samples: {args.samples} holds no records")
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError(f"--threshold must lie in [0, 1], got {args.threshold}")
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    result = evaluate(predictor, samples, args.threshold)
    report = {
        **result.report.to_dict(),
        "architecture": predictor.arch,
        "config": {"checkpoint": str(args.checkpoint), "samples": str(args.samples), "threshold": args.threshold},
        "seed": predictor.header.get("seed"),
        "schema_hash": predictor.schema_hash,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    write_jsonl(out / "scores.jsonl", result.rows)
    print(json.dumps({k: report[k] for k in ("precision", "recall", "f1", "auroc", "threshold")}))
    return EXIT_OK


def cmd_predict_map(args) -> int:
    from firedanger.datacube import load_cube
    from firedanger.errors import SchemaError
    from firedanger.evaluation import load_predictor, render_map

    predictor = load_predictor(_need_file(args.checkpoint, "checkpoint"))
    cube = load_cube(_need_file(args.cube, "cube"), mmap=True)
    if predictor.schema_hash and predictor.schema_hash != cube.schema_hash:
        raise SchemaError(
            f"cube {args.cube} schema_hash {cube.schema_hash} differs from checkpoint {predictor.schema_hash}"
        )
    try:
        date = dt.date.fromisoformat(args.date)
    except ValueError as exc:
        raise UsageError(f"--date: {exc}") from exc
    out = _need_out(args)
    dmap = render_map(predictor, cube, date)
    attrs = {
        "config": {"checkpoint": str(args.checkpoint), "cube": str(args.cube), "date": args.date},
        "seed": predictor.header.get("seed"),
        "architecture": predictor.arch,
        "schema_hash": cube.schema_hash,
    }
    pfc, png = out.with_suffix(".pfc"), out.with_suffix(".png")
    dmap.save_pfc(pfc, attrs)
    dmap.save_png(png)
    print(json.dumps({"map": str(pfc), "image": str(png), "shape": list(dmap.scores.shape)}))
    return EXIT_OK


def describe(path: str) -> dict:
    from firedanger.binfmt import read_header

    magic, header, offset, size = read_header(_need_file(path, "describe"))
    return {"magic": magic.decode("ascii"), "payload_offset": offset, "file_bytes": size, "header": header}


def cmd_describe(args) -> int:
    print(json.dumps(describe(args.path), indent=2, sort_keys=True, default=str))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration for the command")
    common.add_argument("--seed", type=int, help="seed (overrides the config's 'seed')")
    common.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    common.add_argument("--out", metavar="PATH", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="firedanger", description="Next-day wildfire danger pipeline.", parents=[common])
    parser.add_argument("--describe", metavar="PATH", help="print the header of any artifact and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cube and its events sidecar")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", parents=[common], help="harmonize source rasters into a cube")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("extract", parents=[common], help="select records and write samples files")
    p.add_argument("cube")
    p.add_argument("--modality", action="append", help="restrict to a modality (repeatable)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train a model on a samples file")
    p.add_argument("samples")
    p.add_argument("--arch", choices=["rf", "lstm", "cnn", "convlstm"])
    p.add_argument("--val", metavar="SAMPLES", help="validation samples for model selection")
    p.add_argument("--epochs", type=int, help="override the number of epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a samples file and write metrics")
    p.add_argument("checkpoint")
    p.add_argument("samples")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict-map", parents=[common], help="render a next-day danger map")
    p.add_argument("checkpoint")
    p.add_argument("cube")
    p.add_argument("--date", required=True, help="fire day, YYYY-MM-DD")
    p.set_defaults(func=cmd_predict_map)

    p = sub.add_parser("describe", parents=[common], help="print an artifact's header")
    p.add_argument("path")
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _limit_threads(args.threads)
        from firedanger.errors import (
            BoundsError,
            ConfigError,
            FireDangerError,
            GridError,
            ParameterError,
            SchemaError,
        )

        if args.describe:
            print(json.dumps(describe(args.describe), indent=2, sort_keys=True, default=str))
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            print("firedanger: error: a command is required", file=sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"firedanger {args.command or ''}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SchemaError, BoundsError, ParameterError, GridError) as exc:
        print(f"firedanger {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FireDangerError, OSError) as exc:
        print(f"firedanger {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
