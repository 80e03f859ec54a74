"""Differentiable operations on :class:`~firedanger.tensor_core.tensor.Tensor`.

Image-shaped tensors use ``[N, C, H, W]`` layout; a single ``[C, H, W]`` input
is treated as a batch of one and returned without the batch axis.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from firedanger.errors import DimensionError, NumericError, ParameterError
from firedanger.tensor_core.tensor import Tensor

# im2col buffers above this many elements are rebuilt in backward instead of kept alive
_KEEP_COLS_LIMIT = 1 << 23


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _operand(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype), dtype=like.dtype)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _operand(b, a)
    return _operand(a, b), b


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        a, b = b, a
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.ndim(a) == 0:
        k = np.asarray(a, dtype=b.dtype)
        return Tensor._from_op(b.data * k, (b,), lambda g: (g * k,))
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)

    def backward(g):
        return (g * (p * a.data ** (p - 1.0)),)

    return Tensor._from_op(a.data**p, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` laid out ``[in, out]``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data

        def backward(g):
            return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

        return Tensor._from_op(out, (x, weight, bias), backward)

    def backward_nobias(g):
        return g @ weight.data.T, x.data.T @ g

    return Tensor._from_op(out, (x, weight), backward_nobias)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return Tensor._from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mean(x: Tensor) -> Tensor:
    n = x.size
    return Tensor._from_op(
        np.asarray(x.data.mean(), dtype=x.dtype), (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),)
    )


# ---------------------------------------------------------------- shape


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(tuple(shape))
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis but the first."""
    return reshape(x, (x.shape[0], -1))


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g) if _has_fancy(index) else full.__setitem__(index, g)
        return (full,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward)


def _has_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# ---------------------------------------------------------------- activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return Tensor._from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor._from_op(t, (x,), lambda g: (g * (1.0 - t * t),))


def softmax(logits: np.ndarray | Tensor) -> np.ndarray:
    """Row-wise softmax of raw values (not differentiable)."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- losses


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    ``logits`` is ``[N, K]`` with integer ``labels`` of length N, or ``[K]``
    with a single integer label.
    """
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {np.shape(labels)} disagree")
    if not np.all(np.isfinite(z)):
        raise NumericError("softmax_cross_entropy received non-finite logits")
    if y.min(initial=0) < 0 or y.max(initial=0) >= z.shape[1]:
        raise DimensionError(f"labels must lie in [0, {z.shape[1]})")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    losses = lse - shifted[rows, y]
    loss = np.asarray(losses.mean(), dtype=z.dtype)

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, y] -= 1.0
        p *= g / n
        return (p[0] if single else p,)

    return Tensor._from_op(loss, (logits,), backward)


# ---------------------------------------------------------------- regularisation


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by ``1/(1-p)``.

    Eval mode (``training=False``) returns ``x`` itself.
    """
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an rng stream")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- convolution & pooling


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected [C,H,W] or [N,C,H,W], got {x.shape}")


def _im2col(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int, stride: int) -> np.ndarray:
    # xp is channel-major [C, N, Hp, Wp]; result is [C*kh*kw, N*ho*wo]
    c, n = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, padding: int = 0, stride: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding.

    ``kernels`` is ``[C_out, C_in, kH, kW]``; output spatial size is
    ``floor((H + 2*padding - kH) / stride) + 1``.
    """
    xb, squeeze = _batched(x)
    n, c, h, w = xb.shape
    if kernels.ndim != 4:
        raise DimensionError(f"kernels must be [C_out,C_in,kH,kW], got {kernels.shape}")
    o, kc, kh, kw = kernels.shape
    if kc != c:
        raise DimensionError(f"input has {c} channels but kernels expect {kc}")
    if stride < 1 or padding < 0:
        raise ParameterError(f"invalid stride={stride} / padding={padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"bias {bias.shape} does not match {o} output channels")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1

    xp = np.pad(xb.data.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, ho, wo, stride)
    wmat = kernels.data.reshape(o, -1)
    out = (wmat @ cols).reshape(o, n, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None, None]
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    kept = cols if cols.size <= _KEEP_COLS_LIMIT else None
    del cols

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)
        cm = kept if kept is not None else _im2col(xp, kh, kw, ho, wo, stride)
        gk = (gt @ cm.T).reshape(kernels.shape)
        grads = [None, gk]
        if bias is not None:
            grads.append(gt.sum(axis=1))
        if not xb.requires_grad:
            return grads
        gcols = (wmat.T @ gt).reshape(c, kh, kw, n, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j]
        gx = gxp[:, :, padding : padding + h, padding : padding + w].transpose(1, 0, 2, 3)
        grads[0] = np.ascontiguousarray(gx)
        return grads

    parents = (xb, kernels) if bias is None else (xb, kernels, bias)
    result = Tensor._from_op(out, parents, backward)
    return reshape(result, result.shape[1:]) if squeeze else result


def max_pool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing odd rows/columns are dropped.

    Backward routes each gradient to the first maximal cell of its window in
    row-major order.
    """
    xb, squeeze = _batched(x)
    n, c, h, w = xb.shape
    k = int(window)
    if h < k or w < k:
        raise DimensionError(f"pooling window {k} larger than input {h}x{w}")
    ho, wo = h // k, w // k
    blocks = (
        xb.data[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    )
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        routed = (np.arange(k * k) == arg[..., None]) * g[..., None]
        routed = routed.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * k, wo * k)
        full = np.zeros_like(xb.data)
        full[:, :, : ho * k, : wo * k] = routed
        return (full,)

    result = Tensor._from_op(np.ascontiguousarray(out), (xb,), backward)
    return reshape(result, result.shape[1:]) if squeeze else result
