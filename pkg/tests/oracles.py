"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def gini_exact(n0: int, n1: int) -> Fraction:
    n = n0 + n1
    if n == 0:
        return Fraction(0)
    return 1 - Fraction(n0 * n0 + n1 * n1, n * n)


def reference_tree(X, y, min_samples_split: int = 2, min_samples_leaf: int = 1) -> list[tuple]:
    """Exhaustive-split Gini tree in pre-order ``(feature, threshold, n0, n1)`` form.

    Every feature and every gap between consecutive distinct values is tried;
    gains are exact fractions. Ties go to the lowest feature, then the lowest
    threshold. Leaves are ``(-1, 0.0, n0, n1)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = [int(v) for v in y]
    out: list[tuple] = []

    def grow(idx: list[int]) -> None:
        n1 = sum(y[i] for i in idx)
        n0 = len(idx) - n1
        best = None  # (gain, feature, threshold)
        if n0 and n1 and len(idx) >= min_samples_split:
            parent = gini_exact(n0, n1)
            n = len(idx)
            for f in range(X.shape[1]):
                values = sorted({float(X[i, f]) for i in idx})
                for lo, hi in zip(values[:-1], values[1:]):
                    thr = (lo + hi) / 2.0
                    if thr >= hi:
                        thr = lo
                    left = [i for i in idx if X[i, f] <= thr]
                    l1 = sum(y[i] for i in left)
                    l0 = len(left) - l1
                    r1, r0 = n1 - l1, n0 - l0
                    nl, nr = l0 + l1, r0 + r1
                    gain = parent - Fraction(nl, n) * gini_exact(l0, l1) - Fraction(nr, n) * gini_exact(r0, r1)
                    if gain > 0 and (best is None or gain > best[0]):
                        best = (gain, f, thr)
        if best is not None:
            _, f, thr = best
            left = [i for i in idx if X[i, f] <= thr]
            right = [i for i in idx if X[i, f] > thr]
            if min(len(left), len(right)) >= min_samples_leaf:
                out.append((f, thr, n0, n1))
                grow(left)
                grow(right)
                return
        out.append((-1, 0.0, n0, n1))

    grow(list(range(X.shape[0])))
    return out


def auroc_pairwise(scores, labels) -> float:
    """Fraction of (positive, negative) pairs ranked correctly; ties count one half.

    Every pair is compared explicitly; the count is kept in integers (twice the
    win count) so the only rounding is the final division.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(labels)
    pos, neg = s[t == 1], s[t == 0]
    greater = int(np.count_nonzero(pos[:, None] > neg[None, :]))
    equal = int(np.count_nonzero(pos[:, None] == neg[None, :]))
    return float(Fraction(2 * greater + equal, 2 * len(pos) * len(neg)))


def random_tree_dataset(seed: int, n: int = 200, d: int = 4):
    """Mixed continuous and coarse (tie-heavy) features with a noisy label rule."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, ::2] = np.round(X[:, ::2] * 2) / 2  # coarse columns create duplicate values and tied gains
    y = ((X[:, 0] + 0.5 * X[:, 1] + rng.normal(scale=0.7, size=n)) > 0).astype(np.int64)
    return X, y


# ---------------------------------------------------------------- gradient checks


def _tensor_api():
    from firedanger.tensor_core import Parameter, Tensor, backward, precision
    from firedanger.tensor_core import functional as F
    from firedanger.tensor_core.gradcheck import numerical_gradient, relative_error, sample_indices

    return Parameter, Tensor, backward, precision, F, numerical_gradient, relative_error, sample_indices


def primitive_cases():
    """Name -> builder ``rng -> (parameters, scalar loss closure)`` for each layer primitive.

    Inputs are drawn away from kinks (ReLU zero, pooling ties) so central
    differences are valid.
    """
    Parameter, Tensor, _, _, F, *_ = _tensor_api()

    def away_from_zero(rng, shape):
        v = rng.standard_normal(shape)
        return np.where(np.abs(v) < 0.05, 0.1 * np.sign(v) + 0.05, v)

    def weights(rng, shape):
        return Tensor(rng.standard_normal(shape))

    def linear(rng):
        x, w, b = Parameter(rng.standard_normal((4, 5))), Parameter(rng.standard_normal((5, 3))), Parameter(rng.standard_normal(3))
        r = weights(rng, (4, 3))
        return [x, w, b], lambda: F.sum(F.linear(x, w, b) * r)

    def matmul(rng):
        a, b = Parameter(rng.standard_normal((3, 4))), Parameter(rng.standard_normal((4, 2)))
        r = weights(rng, (3, 2))
        return [a, b], lambda: F.sum(F.matmul(a, b) * r)

    def arithmetic(rng):
        a, b = Parameter(rng.standard_normal((3, 4))), Parameter(rng.standard_normal(4))
        r = weights(rng, (3, 4))
        return [a, b], lambda: F.sum((F.add(a, b) * F.sub(a, b) - a * 0.5) * r)

    def power(rng):
        a = Parameter(np.abs(rng.standard_normal(6)) + 0.5)
        return [a], lambda: F.sum(F.power(a, 2.5))

    def activation(fn):
        def build(rng):
            a = Parameter(away_from_zero(rng, (3, 5)))
            r = weights(rng, (3, 5))
            return [a], lambda: F.sum(fn(a) * r)

        return build

    def conv2d(rng):
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x = Parameter(rng.standard_normal((2, 3, 6, 5)))
        k = Parameter(rng.standard_normal((4, 3, 3, 3)))
        b = Parameter(rng.standard_normal(4))
        out_shape = F.conv2d(x, k, b, padding=pad, stride=stride).shape
        r = weights(rng, out_shape)
        return [x, k, b], lambda: F.sum(F.conv2d(x, k, b, padding=pad, stride=stride) * r)

    def max_pool(rng):
        x = Parameter(rng.permutation(2 * 3 * 7 * 6).reshape(2, 3, 7, 6) * 0.1)  # distinct values, no ties
        r = weights(rng, (2, 3, 3, 3))
        return [x], lambda: F.sum(F.max_pool2d(x, 2) * r)

    def dropout(rng):
        x = Parameter(rng.standard_normal((4, 6)))
        r = weights(rng, (4, 6))
        seed = int(rng.integers(1 << 30))
        return [x], lambda: F.sum(F.dropout(x, 0.5, True, np.random.default_rng(seed)) * r)

    def cross_entropy(rng):
        z = Parameter(rng.standard_normal((5, 2)) * 2)
        labels = rng.integers(0, 2, size=5)
        return [z], lambda: F.softmax_cross_entropy(z, labels)

    def shape_ops(rng):
        a, b = Parameter(rng.standard_normal((2, 3, 2))), Parameter(rng.standard_normal((2, 1, 2)))
        r = weights(rng, (2, 6))
        return [a, b], lambda: F.sum(F.flatten(F.reshape(F.concat([a, b], axis=1)[:, 1:], (2, 3, 2))) * r)

    def reductions(rng):
        a = Parameter(rng.standard_normal((3, 4)))
        r = weights(rng, (3, 4))
        return [a], lambda: F.mean(a * r) + F.sum(a * a)

    return {
        "linear": linear,
        "matmul": matmul,
        "add_sub_mul": arithmetic,
        "power": power,
        "relu": activation(F.relu),
        "sigmoid": activation(F.sigmoid),
        "tanh": activation(F.tanh),
        "conv2d": conv2d,
        "max_pool2d": max_pool,
        "dropout": dropout,
        "softmax_cross_entropy": cross_entropy,
        "shape_ops": shape_ops,
        "reductions": reductions,
    }


def check_primitive(name: str, seed: int) -> float:
    """Worst relative error between analytic and numeric gradients for one draw (float64)."""
    _, _, backward, precision, _, numerical_gradient, relative_error, _ = _tensor_api()
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params, f = primitive_cases()[name](rng)
        backward(f())
        return max(relative_error(p.grad, numerical_gradient(lambda: f().item(), p.data)) for p in params)


SMALL_MODELS = {
    "lstm": {"n_features": 3, "days": 4, "hidden": 5, "head": [6, 4]},
    "cnn": {"n_features": 3, "patch": 6, "filters": 4, "head": [5, 3]},
    "convlstm": {"n_features": 3, "days": 3, "patch": 5, "hidden": 3, "head": [4, 3]},
}


def check_model(
    arch: str, seed: int, config: dict | None = None, batch: int = 3, coords: int = 6, training: bool = True
) -> float:
    """Worst relative error over sampled coordinates of every parameter tensor.

    In training mode the dropout mask is fixed per draw.
    """
    from firedanger.neural import build_model

    _, Tensor, backward, precision, F, numerical_gradient, relative_error, sample_indices = _tensor_api()
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        model = build_model(arch, config if config is not None else SMALL_MODELS[arch], seed=seed)
        for p in model.parameters():  # non-zero biases exercise every path
            p.data = p.data + 0.1 * rng.standard_normal(p.shape)
        x = rng.standard_normal((batch, *model.input_shape))
        labels = rng.integers(0, 2, size=batch)
        mask_seed = int(rng.integers(1 << 30))

        def loss():
            return F.softmax_cross_entropy(model.forward(x, training=training, rng=np.random.default_rng(mask_seed)), labels)

        backward(loss())
        worst = 0.0
        for p in model.parameters():
            idx = sample_indices(p.shape, coords, rng)
            num = numerical_gradient(lambda: loss().item(), p.data, indices=idx)
            analytic = np.array([p.grad[i] for i in idx])
            worst = max(worst, relative_error(analytic, np.array([num[i] for i in idx])))
        return worst
