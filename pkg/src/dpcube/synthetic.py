"""Synthetic cubes for experiments and tests."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .cube import CellVector, CubeSchema


def smooth_counts(shape: Sequence[int], total: int, gamma: int, seed: int) -> np.ndarray:
    """Integer counts summing to ``total`` with max - min <= ``gamma`` (gamma >= 1).

    Starts from the most even split and applies random unit transfers that
    keep every cell inside [base, base + gamma].
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1 for arbitrary totals")
    rng = np.random.default_rng(seed)
    m = int(np.prod(shape))
    base, extra = divmod(total, m)
    x = np.full(m, base, dtype=np.int64)
    x[rng.permutation(m)[:extra]] += 1
    for _ in range(4 * m):
        i, j = rng.integers(0, m, size=2)
        if i != j and x[i] < base + gamma and x[j] > base:
            x[i] += 1
            x[j] -= 1
    return x.reshape(shape)


def smooth_cube(shape: Sequence[int], total: int, gamma: int, seed: int) -> CellVector:
    schema = CubeSchema.from_shape(shape)
    return CellVector(schema, smooth_counts(shape, total, gamma, seed).ravel())


def expand_records(x: CellVector) -> np.ndarray:
    """One row of cell coordinates per counted record."""
    counts = np.asarray(x.values, dtype=np.int64)
    if np.any(counts < 0) or not np.array_equal(counts, x.values):
        raise ValueError("expanding needs non-negative integer counts")
    cells = np.repeat(np.arange(x.schema.m), counts)
    return np.stack(np.unravel_index(cells, x.schema.shape), axis=1)
