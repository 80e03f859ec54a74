"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record their parents and a backward rule; :func:`backward` walks the
recorded graph in reverse topological order. Graphs are acyclic by
construction because a tensor's parents must exist before it does.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

from firedanger.errors import DimensionError, GraphError

_DTYPE = [np.dtype(np.float32)]


def default_dtype() -> np.dtype:
    return _DTYPE[-1]


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for newly created tensors.

    The production path runs in float32; float64 exists for gradient checks.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype}")
    _DTYPE.append(dtype)
    try:
        yield
    finally:
        _DTYPE.pop()


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """A node in the computation graph.

    ``data`` is the value, ``grad`` the accumulated gradient (leaves only),
    ``parents`` the upstream tensors consumed by the backward rule.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "_backward", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        if arr.ndim > 0 and 0 in arr.shape:
            raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.name = name

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
        out = cls.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out.parents = tuple(parents)
            out._backward = backward
        else:
            out.parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in functional
    def __add__(self, other):
        from firedanger.tensor_core import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from firedanger.tensor_core import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from firedanger.tensor_core import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from firedanger.tensor_core import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from firedanger.tensor_core import functional as F

        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from firedanger.tensor_core import functional as F

        return F.matmul(self, other)

    def __pow__(self, exponent):
        from firedanger.tensor_core import functional as F

        return F.power(self, exponent)

    def __getitem__(self, index):
        from firedanger.tensor_core import functional as F

        return F.getitem(self, index)

    def sum(self):
        from firedanger.tensor_core import functional as F

        return F.sum(self)

    def mean(self):
        from firedanger.tensor_core import functional as F

        return F.mean(self)

    def reshape(self, *shape):
        from firedanger.tensor_core import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


class Parameter(Tensor):
    """A trainable leaf. ``decay`` marks weights that receive the l2 penalty."""

    __slots__ = ("decay",)

    def __init__(self, data, name: str | None = None, decay: bool = True, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.decay = decay


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        key = id(node)
        if i == 0:
            if state.get(key) == 2:
                continue
            if state.get(key) == 1:
                raise GraphError("computation graph contains a cycle")
            state[key] = 1
        if i < len(node.parents):
            stack.append((node, i + 1))
            parent = node.parents[i]
            if parent.requires_grad:
                pstate = state.get(id(parent))
                if pstate == 1:
                    raise GraphError("computation graph contains a cycle")
                if pstate is None:
                    stack.append((parent, 0))
        else:
            state[key] = 2
            order.append(node)
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring gradients.

    Gradients accumulate across calls; zero them between steps.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires gradients")
    order = _topological_order(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        parent_grads = node._backward(grad)
        for parent, g in zip(node.parents, parent_grads):
            if g is None or not parent.requires_grad:
                continue
            if g.shape != parent.data.shape:
                raise DimensionError(
                    f"backward rule produced gradient of shape {g.shape} for input of shape {parent.data.shape}"
                )
            key = id(parent)
            prev = pending.get(key)
            pending[key] = g if prev is None else prev + g
