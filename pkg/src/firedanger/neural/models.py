"""LSTM, CNN and ConvLSTM classifiers on the tensor engine.

All models take a standardized float batch and return ``[N, 2]`` logits.
Gate order in both recurrent cells is input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from firedanger import rng as rngmod
from firedanger.errors import DimensionError, ParameterError
from firedanger.tensor_core import functional as F
from firedanger.tensor_core.tensor import Parameter, Tensor, default_dtype


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(default_dtype())


class Model:
    """Ordered parameter container with a forward pass."""

    arch = "base"
    modality = ""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def _add(self, name: str, data: np.ndarray, decay: bool = True) -> Parameter:
        p = Parameter(data, name=name, decay=decay)
        self._params[name] = p
        return p

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return list(self._params.items())

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def parameter_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self._params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise DimensionError(f"parameter {k}: stored shape {arr.shape} != model shape {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def config(self) -> dict:
        raise NotImplementedError

    @property
    def input_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    def check_input(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=default_dtype()))
        if t.shape[1:] != self.input_shape:
            raise DimensionError(f"{self.arch} expects batches of shape [N, {', '.join(map(str, self.input_shape))}], got {t.shape}")
        return t

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return self.forward(x, training, rng)

    # shared dense head: linear + ReLU + dropout for every layer but the last
    def _init_head(self, rng, n_in: int, sizes: tuple[int, ...], n_classes: int) -> None:
        dims = [n_in, *sizes, n_classes]
        self._head = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            name = f"fc{i + 1}" if i < len(sizes) else "out"
            self._add(f"{name}.weight", glorot(rng, (a, b), a, b))
            self._add(f"{name}.bias", np.zeros(b, dtype=default_dtype()), decay=False)
            self._head.append(name)

    def _run_head(self, h: Tensor, training: bool, rng) -> Tensor:
        for name in self._head:
            h = F.linear(h, self._params[f"{name}.weight"], self._params[f"{name}.bias"])
            if name != "out":
                h = F.relu(h)
                h = F.dropout(h, self.dropout, training, rng)
        return h


def _gates(z: Tensor, hidden: int, axis: int):
    def part(k):
        idx = [slice(None)] * z.ndim
        idx[axis] = slice(k * hidden, (k + 1) * hidden)
        return z[tuple(idx)]

    return F.sigmoid(part(0)), F.sigmoid(part(1)), F.tanh(part(2)), F.sigmoid(part(3))


@dataclass
class LSTMConfig:
    n_features: int = 18
    days: int = 10
    hidden: int = 64
    head: tuple[int, ...] = (64, 32)
    n_classes: int = 2
    dropout: float = 0.5


class LSTMModel(Model):
    arch = "lstm"
    modality = "temporal"

    def __init__(self, cfg: LSTMConfig | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg or LSTMConfig()
        c = self.cfg
        if not 0 <= c.dropout < 1:
            raise ParameterError(f"dropout must be in [0, 1), got {c.dropout}")
        self.dropout = c.dropout
        rng = rngmod.stream(seed, "init", self.arch)
        H = c.hidden
        self._add("lstm.w_input", glorot(rng, (c.n_features, 4 * H), c.n_features, 4 * H))
        self._add("lstm.w_hidden", glorot(rng, (H, 4 * H), H, 4 * H))
        bias = np.zeros(4 * H, dtype=default_dtype())
        bias[H : 2 * H] = 1.0
        self._add("lstm.bias", bias, decay=False)
        self._init_head(rng, H, tuple(c.head), c.n_classes)

    def config(self) -> dict:
        d = asdict(self.cfg)
        d["head"] = list(self.cfg.head)
        return d

    @property
    def input_shape(self):
        return (self.cfg.days, self.cfg.n_features)

    def recurrent(self, x) -> Tensor:
        """Final hidden state ``[N, hidden]`` from a zero initial state."""
        x = self.check_input(x)
        n, t_len, f = x.shape
        H = self.cfg.hidden
        p = self._params
        xz = F.reshape(F.linear(F.reshape(x, (n * t_len, f)), p["lstm.w_input"], p["lstm.bias"]), (n, t_len, 4 * H))
        h = c = None
        for t in range(t_len):
            z = xz[:, t]
            if h is not None:
                z = z + F.matmul(h, p["lstm.w_hidden"])
            i, fg, g, o = _gates(z, H, axis=1)
            c = i * g if c is None else fg * c + i * g
            h = o * F.tanh(c)
        return h

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return self._run_head(self.recurrent(x), training, rng)


@dataclass
class CNNConfig:
    n_features: int = 18
    patch: int = 25
    filters: int = 16
    kernel: int = 3
    head: tuple[int, ...] = (16, 8)
    n_classes: int = 2
    dropout: float = 0.5


class CNNModel(Model):
    arch = "cnn"
    modality = "spatial"

    def __init__(self, cfg: CNNConfig | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg or CNNConfig()
        c = self.cfg
        if c.kernel % 2 != 1:
            raise ParameterError(f"kernel size must be odd, got {c.kernel}")
        self.dropout = c.dropout
        rng = rngmod.stream(seed, "init", self.arch)
        k = c.kernel
        self._add("conv.weight", glorot(rng, (c.filters, c.n_features, k, k), c.n_features * k * k, c.filters * k * k))
        self._add("conv.bias", np.zeros(c.filters, dtype=default_dtype()), decay=False)
        self._init_head(rng, self.flat_size, tuple(c.head), c.n_classes)

    @property
    def pooled_side(self) -> int:
        return self.cfg.patch // 2

    @property
    def flat_size(self) -> int:
        return self.cfg.filters * self.pooled_side**2

    def config(self) -> dict:
        d = asdict(self.cfg)
        d["head"] = list(self.cfg.head)
        return d

    @property
    def input_shape(self):
        return (self.cfg.n_features, self.cfg.patch, self.cfg.patch)

    def features(self, x) -> Tensor:
        x = self.check_input(x)
        p = self._params
        y = F.relu(F.conv2d(x, p["conv.weight"], p["conv.bias"], padding=self.cfg.kernel // 2, stride=1))
        return F.max_pool2d(y, 2)

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        pooled = self.features(x)
        h = F.dropout(F.flatten(pooled), self.dropout, training, rng)
        return self._run_head(h, training, rng)


@dataclass
class ConvLSTMConfig:
    n_features: int = 18
    days: int = 10
    patch: int = 25
    hidden: int = 16
    kernel: int = 3
    head: tuple[int, ...] = (16, 8)
    n_classes: int = 2
    dropout: float = 0.5


class ConvLSTMModel(Model):
    arch = "convlstm"
    modality = "spatiotemporal"

    def __init__(self, cfg: ConvLSTMConfig | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg or ConvLSTMConfig()
        c = self.cfg
        if c.kernel % 2 != 1:
            raise ParameterError(f"kernel size must be odd, got {c.kernel}")
        self.dropout = c.dropout
        rng = rngmod.stream(seed, "init", self.arch)
        H, k, cin = c.hidden, c.kernel, c.n_features + c.hidden
        # one kernel over the channel concatenation [x_t, h_{t-1}]
        self._add("cell.weight", glorot(rng, (4 * H, cin, k, k), cin * k * k, 4 * H * k * k))
        bias = np.zeros(4 * H, dtype=default_dtype())
        bias[H : 2 * H] = 1.0
        self._add("cell.bias", bias, decay=False)
        if c.patch >= 2:
            self._init_head(rng, self.flat_size, tuple(c.head), c.n_classes)

    @property
    def flat_size(self) -> int:
        return self.cfg.hidden * (self.cfg.patch // 2) ** 2

    def config(self) -> dict:
        d = asdict(self.cfg)
        d["head"] = list(self.cfg.head)
        return d

    @property
    def input_shape(self):
        return (self.cfg.days, self.cfg.n_features, self.cfg.patch, self.cfg.patch)

    def recurrent(self, x) -> Tensor:
        """Final hidden state ``[N, hidden, patch, patch]`` from zero initial states.

        The convolution over ``[x_t, h]`` is evaluated as the sum of its input
        and hidden parts, which skips the input-gradient work for ``x_t``.
        """
        x = self.check_input(x)
        c = self.cfg
        p = self._params
        pad = c.kernel // 2
        w = p["cell.weight"]
        w_x = w[:, : c.n_features]
        w_h = w[:, c.n_features :]
        h = cell = None
        for t in range(c.days):
            z = F.conv2d(x[:, t], w_x, p["cell.bias"], padding=pad)
            if h is not None:
                z = z + F.conv2d(h, w_h, None, padding=pad)
            i, fg, g, o = _gates(z, c.hidden, axis=1)
            cell = i * g if cell is None else fg * cell + i * g
            h = o * F.tanh(cell)
        return h

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        h = self.recurrent(x)
        pooled = F.max_pool2d(h, 2)
        flat = F.dropout(F.flatten(pooled), self.dropout, training, rng)
        return self._run_head(flat, training, rng)


ARCHITECTURES = {"lstm": (LSTMModel, LSTMConfig), "cnn": (CNNModel, CNNConfig), "convlstm": (ConvLSTMModel, ConvLSTMConfig)}
MODALITY_OF = {"rf": "pixel", "lstm": "temporal", "cnn": "spatial", "convlstm": "spatiotemporal"}


def build_model(arch: str, config: dict | None = None, seed: int = 0) -> Model:
    if arch not in ARCHITECTURES:
        raise ParameterError(f"unknown architecture {arch!r}; expected one of {sorted(ARCHITECTURES)}")
    cls, cfg_cls = ARCHITECTURES[arch]
    cfg = dict(config or {})
    if "head" in cfg:
        cfg["head"] = tuple(cfg["head"])
    try:
        return cls(cfg_cls(**cfg), seed=seed)
    except TypeError as exc:
        raise ParameterError(f"bad {arch} model config: {exc}") from exc
