"""Central finite-difference gradient checking (float64 only)."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def numerical_gradient(
    f: Callable[[], float],
    array: np.ndarray,
    h: float = 1e-5,
    indices: Sequence[tuple[int, ...]] | None = None,
) -> np.ndarray:
    """Estimate d f / d array by perturbing ``array`` in place.

    ``f`` must read ``array`` at call time. When ``indices`` is given only those
    coordinates are estimated; the rest of the result stays NaN.
    """
    if array.dtype != np.float64:
        raise TypeError("finite differences need float64 arrays")
    grad = np.full(array.shape, np.nan) if indices is not None else np.zeros(array.shape)
    it = indices if indices is not None else list(np.ndindex(array.shape))
    for idx in it:
        orig = array[idx]
        array[idx] = orig + h
        fp = f()
        array[idx] = orig - h
        fm = f()
        array[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-10) -> float:
    """``||a - n|| / max(||a||, ||n||)``, or 0 when both norms are below ``atol``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    keep = ~np.isnan(n)
    a, n = a[keep], n[keep]
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale <= atol:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def sample_indices(shape: tuple[int, ...], k: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Pick up to ``k`` distinct coordinates of an array of ``shape``."""
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(k, size), replace=False)
    return [tuple(int(v) for v in np.unravel_index(i, shape)) for i in sorted(flat)]
