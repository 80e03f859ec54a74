"""Mini-batch training loop, batch-invariant inference and PMC checkpoints."""

from __future__ import annotations

import copy
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from firedanger import rng as rngmod
from firedanger.binfmt import read_header, write_container
from firedanger.errors import DivergenceError, FormatError, NumericError, ParameterError, UndefinedMetricError
from firedanger.neural.models import Model, build_model
from firedanger.tensor_core import functional as F
from firedanger.tensor_core.optim import Adam
from firedanger.tensor_core.tensor import Tensor, backward

log = logging.getLogger(__name__)

MAGIC = b"PMC1"
INFERENCE_BLOCK = 64

REFERENCE_HYPERPARAMETERS = {
    "lstm": {"lr": 1e-3, "weight_decay": 0.01},
    "cnn": {"lr": 4e-4, "weight_decay": 0.03},
    "convlstm": {"lr": 1e-4, "weight_decay": 0.03},
}


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0

    @classmethod
    def reference(cls, arch: str, **overrides) -> TrainConfig:
        if arch not in REFERENCE_HYPERPARAMETERS:
            raise ParameterError(f"no reference hyperparameters for {arch!r}")
        return cls(**{**REFERENCE_HYPERPARAMETERS[arch], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Model
    best_model: Model
    best_epoch: int
    log: list[dict] = field(default_factory=list)


def _ce(model: Model, x: np.ndarray, y: np.ndarray, training: bool, rng=None) -> Tensor:
    logits = model.forward(x, training=training, rng=rng)
    return F.softmax_cross_entropy(logits, y)


def l2_penalty(model: Model, weight_decay: float) -> float:
    return float(weight_decay * sum(float(np.sum(p.data.astype(np.float64) ** 2)) for p in model.parameters() if p.decay))


def evaluate_loss(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 128) -> float:
    """Mean eval-mode cross-entropy over a set."""
    total = 0.0
    for s in range(0, len(y), batch_size):
        loss = _ce(model, x[s : s + batch_size], y[s : s + batch_size], training=False)
        total += float(loss.data) * len(y[s : s + batch_size])
    return total / len(y)


def train(
    model: Model,
    x_train: np.ndarray,
    y_train: np.ndarray,
    config: TrainConfig,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adam on mean softmax cross-entropy; l2 enters through the optimizer.

    The logged ``train_loss`` is the mean training-mode cross-entropy over the
    epoch's batches and ``l2_penalty`` the decay term at epoch end. Without a
    validation set the best model is the final one.
    """
    from firedanger.evaluation.metrics import auroc

    y_train = np.asarray(y_train, dtype=np.int64)
    n = len(y_train)
    if n == 0:
        raise ParameterError("training set is empty")
    if config.epochs < 0 or config.batch_size < 1:
        raise ParameterError(f"invalid schedule: epochs={config.epochs}, batch_size={config.batch_size}")
    has_val = x_val is not None and y_val is not None and len(y_val) > 0
    opt = Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    best_state, best_epoch, best_loss = model.state(), 0, math.inf
    history = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rngmod.stream(config.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for b, s in enumerate(range(0, n, config.batch_size)):
            idx = order[s : s + config.batch_size]
            drop_rng = rngmod.stream(config.seed, "dropout", epoch, b)
            try:
                loss = _ce(model, x_train[idx], y_train[idx], training=True, rng=drop_rng)
            except NumericError as exc:
                raise DivergenceError(f"non-finite logits at epoch {epoch}, batch {b}") from exc
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.zero_grad()
            backward(loss)
            opt.step()
            total += value * len(idx)
        row = {
            "epoch": epoch,
            "train_loss": total / n,
            "l2_penalty": l2_penalty(model, config.weight_decay),
            "val_loss": None,
            "val_auroc": None,
        }
        if has_val:
            row["val_loss"] = evaluate_loss(model, x_val, y_val, config.batch_size)
            try:
                row["val_auroc"] = auroc(predict_proba(model, x_val), y_val)
            except UndefinedMetricError:
                row["val_auroc"] = None
            if row["val_loss"] < best_loss:
                best_loss, best_epoch, best_state = row["val_loss"], epoch, model.state()
        history.append(row)
        log.info("epoch %d (%.1fs): %s", epoch, time.perf_counter() - t0, row)
        if on_epoch:
            on_epoch(row)
    best = copy.deepcopy(model)
    if has_val and config.epochs > 0:
        best.load_state(best_state)
    else:
        best_epoch = config.epochs
    return TrainResult(model, best, best_epoch, history)


def predict_logits(model: Model, x: np.ndarray, block: int = INFERENCE_BLOCK) -> np.ndarray:
    """Eval-mode logits computed in fixed-size zero-padded blocks.

    Every sample passes through kernels of identical shape wherever it sits in
    the input, so a sample's score does not depend on its batch companions.
    """
    x = np.asarray(x)
    single = x.ndim == len(model.input_shape)
    if single:
        x = x[None]
    out = []
    for s in range(0, x.shape[0], block):
        part = x[s : s + block]
        m = part.shape[0]
        if m < block:
            pad = np.zeros((block - m, *part.shape[1:]), dtype=part.dtype)
            part = np.concatenate([part, pad])
        out.append(model.forward(part, training=False).data[:m])
    logits = np.concatenate(out) if out else np.zeros((0, 2), dtype=np.float32)
    return logits[0] if single else logits


def predict_proba(model: Model, x: np.ndarray, block: int = INFERENCE_BLOCK) -> np.ndarray:
    """Danger score: softmax probability of class 1."""
    logits = predict_logits(model, x, block)
    return F.softmax(logits)[..., 1]


# ---------------------------------------------------------------- checkpoint


def save_model(model: Model, path: str | os.PathLike, extra: dict | None = None) -> None:
    names = [k for k, _ in model.named_parameters()]
    header = {
        "format": "PMC1",
        "architecture": model.arch,
        "modality": model.modality,
        "model_config": model.config(),
        "parameters": [{"name": k, "shape": list(p.shape)} for k, p in model.named_parameters()],
        "dtype": "float32 LE",
        **(extra or {}),
    }
    chunks = (np.ascontiguousarray(model._params[k].data, dtype="<f4").tobytes() for k in names)
    write_container(path, MAGIC, header, chunks)


def load_model(path: str | os.PathLike) -> tuple[Model, dict]:
    _, header, offset, size = read_header(path, MAGIC)
    try:
        specs = [(p["name"], tuple(p["shape"])) for p in header["parameters"]]
        arch = header["architecture"]
        cfg = header["model_config"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed PMC header ({exc})", 8) from exc
    expected = offset + sum(int(np.prod(s)) * 4 for _, s in specs)
    if size != expected:
        raise FormatError(f"{path}: parameter payload is {size - offset} bytes, header implies {expected - offset}", min(size, expected))
    model = build_model(arch, cfg, seed=0)
    state, pos = {}, offset
    with open(path, "rb") as fh:
        for name, shape in specs:
            count = int(np.prod(shape))
            fh.seek(pos)
            state[name] = np.fromfile(fh, dtype="<f4", count=count).reshape(shape)
            pos += count * 4
    if set(state) != {k for k, _ in model.named_parameters()}:
        raise FormatError(f"{path}: parameter names do not match architecture {arch!r}", offset)
    model.load_state(state)
    return model, header
