"""Random range-query workloads and release quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cube import CellVector, CubeSchema, LinearQuery, PartitionBox
from .estimate import cell_estimates
from .partition import ReleasedHistogram

# Rejection sampling gives up after this many draws per accepted query.
_MAX_TRIES_PER_QUERY = 10_000


@dataclass(frozen=True)
class Workload:
    schema: CubeSchema
    queries: tuple[LinearQuery, ...]
    seed: int
    size_filter: tuple[int, int] | None = None

    def __len__(self):
        return len(self.queries)

    def sizes(self) -> np.ndarray:
        return np.array([q.s for q in self.queries], dtype=np.int64)

    def lo_hi(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([q.lo for q in self.queries], dtype=np.int64).reshape(len(self), -1)
        hi = np.array([q.hi for q in self.queries], dtype=np.int64).reshape(len(self), -1)
        return lo, hi


def _interval_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.triu_indices(n)
    return lo, hi


def _feasible_sizes(shape: Sequence[int]) -> set[int]:
    sizes = {1}
    for n in shape:
        sizes = {a * w for a in sizes for w in range(1, n + 1)}
    return sizes


def generate_workload(
    schema: CubeSchema, count: int, seed: int, size_filter: tuple[int, int] | None = None
) -> Workload:
    """Random axis-range queries.

    Each dimension gets an inclusive range drawn uniformly from all (lo, hi)
    pairs with lo <= hi. With ``size_filter`` = (smin, smax) draws are
    rejected until the query size falls in the band.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if size_filter is not None:
        smin, smax = size_filter
        if not any(smin <= s <= smax for s in _feasible_sizes(schema.shape)):
            raise ValueError(f"no query size in [{smin}, {smax}] is possible for shape {schema.shape}")
    rng = np.random.default_rng(seed)
    tables = [_interval_table(n) for n in schema.shape]

    los, his = [], []
    need, tries = count, 0
    while need > 0:
        batch = max(need * 2, 64)
        lo = np.empty((batch, schema.ndim), dtype=np.int64)
        hi = np.empty((batch, schema.ndim), dtype=np.int64)
        for d, (tlo, thi) in enumerate(tables):
            pick = rng.integers(0, tlo.size, size=batch)
            lo[:, d], hi[:, d] = tlo[pick], thi[pick]
        if size_filter is not None:
            s = np.prod(hi - lo + 1, axis=1)
            keep = (s >= size_filter[0]) & (s <= size_filter[1])
            lo, hi = lo[keep], hi[keep]
        los.append(lo[:need])
        his.append(hi[:need])
        need -= len(los[-1])
        tries += batch
        if tries > _MAX_TRIES_PER_QUERY * count:
            raise ValueError("size filter accepts too few queries")
    lo, hi = np.concatenate(los), np.concatenate(his)
    queries = tuple(LinearQuery(tuple(a), tuple(b)) for a, b in zip(lo.tolist(), hi.tolist()))
    return Workload(schema, queries, seed, tuple(size_filter) if size_filter else None)


def _box_sums(cube: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sums of ``cube`` over many inclusive boxes via a summed-area table."""
    ndim = cube.ndim
    sat = cube.astype(float)
    for ax in range(ndim):
        sat = np.cumsum(sat, axis=ax)
    sat = np.pad(sat, [(1, 0)] * ndim)
    total = np.zeros(len(lo))
    for corner in range(2**ndim):
        idx, sign = [], 1
        for d in range(ndim):
            if corner >> d & 1:
                idx.append(lo[:, d])
                sign = -sign
            else:
                idx.append(hi[:, d] + 1)
        total += sign * sat[tuple(idx)]
    return total


def answers(w: Workload, x: CellVector) -> np.ndarray:
    """Exact answers of every workload query on ``x``."""
    lo, hi = w.lo_hi()
    return _box_sums(x.as_cube(), lo, hi)


def estimates(w: Workload, h: ReleasedHistogram, method: str) -> np.ndarray:
    """Estimated answers; every estimator is a linear function of per-cell estimates."""
    lo, hi = w.lo_hi()
    return _box_sums(cell_estimates(h, method).as_cube(), lo, hi)


def abs_errors(w: Workload, x: CellVector, h: ReleasedHistogram, method: str) -> np.ndarray:
    return np.abs(estimates(w, h, method) - answers(w, x))


def avg_abs_error(w: Workload, x: CellVector, h: ReleasedHistogram, method: str) -> float:
    return float(np.mean(abs_errors(w, x, h, method)))


def empirical_usefulness(w: Workload, x: CellVector, h: ReleasedHistogram, method: str, epsilon: float) -> float:
    """Fraction of queries answered within ``epsilon`` of the truth."""
    return float(np.mean(abs_errors(w, x, h, method) <= epsilon))


def weighted_variance(boxes: Sequence[PartitionBox] | ReleasedHistogram, x: CellVector) -> float:
    """Sum over boxes of (true count in box) * (population variance of its true cell counts)."""
    if isinstance(boxes, ReleasedHistogram):
        boxes = boxes.boxes
    cube = x.as_cube()
    total = 0.0
    for box in boxes:
        block = cube[box.slices]
        total += float(block.sum()) * float(np.var(block))
    return total


def size_bands(m: int, k: int = 4) -> list[tuple[int, int]]:
    """Split query sizes 1..m into ``k`` bands by fraction of the cube."""
    edges = [0] + [math.floor(m * i / k) for i in range(1, k)] + [m]
    bands = []
    for a, b in zip(edges, edges[1:]):
        if b > a:
            bands.append((a + 1, b))
    return bands
