"""Random Forest for the pixel modality, built from scratch.

Trees are CART classifiers grown with the Gini criterion until nodes are pure
or no split lowers impurity. Each node considers a uniform random subset of
``ceil(sqrt(d))`` features; thresholds are midpoints between consecutive
distinct values; equal gains go to the lowest feature index, then the lowest
threshold. Samples with ``x <= threshold`` go left.
"""

from __future__ import annotations

import math
from fractions import Fraction
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from firedanger import rng as rngmod
from firedanger.binfmt import read_header, write_container
from firedanger.errors import DimensionError, FormatError, ParameterError

MAGIC = b"PRF1"

NODE_DTYPE = np.dtype(
    [
        ("feature", "<i4"),  # -1 marks a leaf
        ("threshold", "<f8"),
        ("left", "<i4"),
        ("right", "<i4"),
        ("n0", "<u4"),
        ("n1", "<u4"),
    ]
)


def gini(n0: int, n1: int) -> float:
    n = n0 + n1
    if n == 0:
        return 0.0
    p0, p1 = n0 / n, n1 / n
    return 1.0 - (p0 * p0 + p1 * p1)


def split_score(l0, l1, r0, r1):
    """``n`` times (parent Gini minus weighted child Gini), up to a constant.

    Larger is better. Works elementwise on arrays of integer counts.
    """
    nl = l0 + l1
    nr = r0 + r1
    return (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr


def reduces_impurity(l0, l1, r0, r1):
    """Exact test for a strictly positive Gini gain: the children's class mixes differ."""
    return l1 * (r0 + r1) != r1 * (l0 + l1)


@dataclass
class TreeParams:
    max_features: int | str | None = "sqrt"  # int, "sqrt" or None (all features)
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def n_features_per_split(self, d: int) -> int:
        if self.max_features is None:
            return d
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        k = int(self.max_features)
        if not 1 <= k <= d:
            raise ParameterError(f"max_features must be in [1, {d}], got {k}")
        return k


@dataclass
class Tree:
    """Flat pre-order node table."""

    nodes: np.ndarray  # NODE_DTYPE

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.size)

    @property
    def n_leaves(self) -> int:
        return int((self.nodes["feature"] < 0).sum())

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i, nd in enumerate(self.nodes):
            if nd["feature"] >= 0:
                depth[nd["left"]] = depth[nd["right"]] = depth[i] + 1
        return int(depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        nodes = self.nodes
        at = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(nodes["feature"][at] >= 0)
        while active.size:
            cur = at[active]
            f = nodes["feature"][cur]
            go_left = X[active, f] <= nodes["threshold"][cur]
            at[active] = np.where(go_left, nodes["left"][cur], nodes["right"][cur])
            active = active[nodes["feature"][at[active]] >= 0]
        return at

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        leaf = self.nodes[self.leaf_index(X)]
        n0 = leaf["n0"].astype(np.float64)
        n1 = leaf["n1"].astype(np.float64)
        return n1 / (n0 + n1)

    def structure(self) -> list[tuple]:
        """Comparable pre-order description: ``(feature, threshold, n0, n1)`` per node."""
        return [(int(n["feature"]), float(n["threshold"]), int(n["n0"]), int(n["n1"])) for n in self.nodes]


def _exact_score(l0: int, l1: int, r0: int, r1: int) -> Fraction:
    return Fraction(l0 * l0 + l1 * l1, l0 + l1) + Fraction(r0 * r0 + r1 * r1, r0 + r1)


# float scores closer than this (relatively) are compared exactly
_TIE_TOL = 1e-9


def _best_split(X, y, idx, features):
    """Best ``(feature, threshold)`` over ``features`` (ascending) or ``None``.

    Candidates are ranked by float score; near-ties are settled with exact
    rational arithmetic so equal-gain splits always fall to the lowest
    feature, then the lowest threshold.
    """
    best = None
    best_score = -np.inf
    best_exact = None
    n = idx.size
    tot1 = int(y[idx].sum())
    tot0 = n - tot1
    ys = y[idx]
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        v = xs[order]
        distinct = v[1:] > v[:-1]
        if not distinct.any():
            continue
        c1 = np.cumsum(ys[order])[:-1]
        nl = np.arange(1, n)
        l1 = c1
        l0 = nl - l1
        r1 = tot1 - l1
        r0 = tot0 - l0
        ok = distinct & reduces_impurity(l0, l1, r0, r1)
        if not ok.any():
            continue
        cand = np.flatnonzero(ok)
        scores = split_score(l0[cand], l1[cand], r0[cand], r1[cand])
        top = scores.max()
        near = np.flatnonzero(scores >= top - _TIE_TOL * abs(top))
        if near.size == 1:
            j, exact = int(near[0]), None
        else:
            exacts = [_exact_score(int(l0[cand[k]]), int(l1[cand[k]]), int(r0[cand[k]]), int(r1[cand[k]])) for k in near]
            m = max(exacts)
            first = exacts.index(m)  # lowest threshold among exact maxima
            j, exact = int(near[first]), m
        if best is not None and abs(scores[j] - best_score) <= _TIE_TOL * abs(best_score):
            # near-tie with an earlier (lower-index) feature: replace only if exactly better
            i = cand[j]
            mine = exact if exact is not None else _exact_score(int(l0[i]), int(l1[i]), int(r0[i]), int(r1[i]))
            if best_exact is None:
                best_exact = _exact_score(*best[2])
            if mine <= best_exact:
                continue
            better = True
        else:
            better = scores[j] > best_score
        if better:
            i = cand[j]
            best_score = scores[j]
            best_exact = exact
            best = (int(f), _midpoint(float(v[i]), float(v[i + 1])), (int(l0[i]), int(l1[i]), int(r0[i]), int(r1[i])))
    return None if best is None else best[:2]


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    return lo if mid >= hi else mid


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator | None = None,
    params: TreeParams | None = None,
) -> Tree:
    """Grow one unpruned classification tree on ``X [n, d]``, ``y`` in {0, 1}."""
    params = params or TreeParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ParameterError(f"fit_tree needs a non-empty [n, d] matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"labels {y.shape} do not match {X.shape[0]} samples")
    if np.any((y != 0) & (y != 1)):
        raise ParameterError("labels must be 0 or 1")
    d = X.shape[1]
    k = params.n_features_per_split(d)
    if k < d and rng is None:
        raise ParameterError("feature subsampling needs an rng stream")

    rows: list[tuple] = []
    # explicit stack gives pre-order numbering: (sample indices, parent slot, side)
    stack: list[tuple[np.ndarray, int, str]] = [(np.arange(X.shape[0]), -1, "")]
    while stack:
        idx, parent, side = stack.pop()
        me = len(rows)
        if parent >= 0:
            prow = list(rows[parent])
            prow[2 if side == "left" else 3] = me
            rows[parent] = tuple(prow)
        n1 = int(y[idx].sum())
        n0 = idx.size - n1
        split = None
        if n0 and n1 and idx.size >= params.min_samples_split:
            feats = np.arange(d) if k == d else np.sort(rng.choice(d, size=k, replace=False))
            split = _best_split(X, y, idx, feats)
        if split is not None:
            f, thr = split
            go_left = X[idx, f] <= thr
            left, right = idx[go_left], idx[~go_left]
            if min(left.size, right.size) < params.min_samples_leaf:
                split = None
        if split is None:
            rows.append((-1, 0.0, -1, -1, n0, n1))
            continue
        rows.append((f, thr, -1, -1, n0, n1))
        stack.append((right, me, "right"))
        stack.append((left, me, "left"))
    return Tree(np.array(rows, dtype=NODE_DTYPE))


@dataclass
class ForestParams:
    n_trees: int = 100
    bootstrap: bool = True
    max_features: int | str | None = "sqrt"
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_features, self.min_samples_split, self.min_samples_leaf)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForestModel:
    trees: list[Tree]
    tree_seeds: list[int]
    params: ForestParams
    n_features: int
    metadata: dict = field(default_factory=dict)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean leaf positive fraction over trees; accepts ``[d]`` or ``[n, d]``."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X[None] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise DimensionError(f"forest expects payloads of length {self.n_features}, got shape {X.shape}")
        votes = np.stack([t.predict_proba(X2) for t in self.trees])
        # summing sorted votes makes the score independent of tree order bit for bit
        out = np.sort(votes, axis=0).sum(axis=0) / len(self.trees)
        return out[0] if single else out


def fit_forest(X: np.ndarray, y: np.ndarray, params: ForestParams | None = None, seed: int = 0) -> ForestModel:
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ParameterError(f"fit_forest needs at least 2 samples, got shape {X.shape}")
    if params.n_trees < 1:
        raise ParameterError(f"n_trees must be >= 1, got {params.n_trees}")
    tp = params.tree_params()
    trees, seeds = [], []
    for i in range(params.n_trees):
        s = rngmod.substream_seed(seed, "forest", "tree", i)
        rng = rngmod.stream(s, "tree")
        if params.bootstrap:
            pick = rng.integers(0, X.shape[0], size=X.shape[0])
            Xi, yi = X[pick], y[pick]
        else:
            Xi, yi = X, y
        trees.append(fit_tree(Xi, yi, rng, tp))
        seeds.append(s)
    return ForestModel(trees, seeds, params, X.shape[1], {"seed": int(seed), "n_samples": int(X.shape[0])})


# ---------------------------------------------------------------- checkpoint


def save_forest(model: ForestModel, path: str | os.PathLike, extra: dict | None = None) -> None:
    header = {
        "format": "PRF1",
        "architecture": "rf",
        "params": model.params.to_dict(),
        "tree_seeds": [str(s) for s in model.tree_seeds],
        "n_features": model.n_features,
        "tree_sizes": [t.n_nodes for t in model.trees],
        "node_layout": "feature i32, threshold f64, left i32, right i32, n0 u32, n1 u32 (LE, pre-order)",
        "metadata": model.metadata,
        **(extra or {}),
    }
    write_container(path, MAGIC, header, (t.nodes.astype(NODE_DTYPE).tobytes() for t in model.trees))


def load_forest(path: str | os.PathLike) -> tuple[ForestModel, dict]:
    _, header, offset, size = read_header(path, MAGIC)
    try:
        sizes = [int(s) for s in header["tree_sizes"]]
        params = ForestParams(**header["params"])
        seeds = [int(s) for s in header["tree_seeds"]]
        n_features = int(header["n_features"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PRF header ({exc})", 8) from exc
    expected = offset + sum(sizes) * NODE_DTYPE.itemsize
    if size != expected:
        raise FormatError(f"{path}: node tables hold {size - offset} bytes, header implies {expected - offset}", min(size, expected))
    table = np.fromfile(path, dtype=NODE_DTYPE, count=sum(sizes), offset=offset)
    trees, at = [], 0
    for s in sizes:
        trees.append(Tree(table[at : at + s].copy()))
        at += s
    return ForestModel(trees, seeds, params, n_features, dict(header.get("metadata", {}))), header
