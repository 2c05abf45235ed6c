"""Answering range counting queries from a released histogram."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cube import CellVector, PartitionBox
from .partition import ReleasedHistogram

METHODS = ("uniform", "ls", "cell")


@dataclass(frozen=True)
class BoxContribution:
    box_id: int
    s: int
    value: float


@dataclass(frozen=True)
class Estimate:
    value: float
    method: str
    per_box: tuple[BoxContribution, ...] = field(default=(), repr=False)


def _require_subcubes(h: ReleasedHistogram) -> None:
    if not h.has_subcubes:
        raise ValueError("release has no subcube histogram; only the cell method applies")


def _overlaps(q: PartitionBox, h: ReleasedHistogram):
    h.schema.check_box(q)
    for k, box in enumerate(h.boxes):
        inter = box.intersect(q)
        if inter is not None:
            yield k, box, inter


def estimate_uniform(q: PartitionBox, h: ReleasedHistogram) -> Estimate:
    """Sum of (s_p / n_p) * y_p over the boxes the query touches."""
    _require_subcubes(h)
    parts = []
    for k, box, inter in _overlaps(q, h):
        s = inter.n_p
        parts.append(BoxContribution(k, s, s / box.n_p * h.box_counts[k]))
    return Estimate(float(sum(p.value for p in parts)), "uniform", tuple(parts))


def estimate_cell_only(q: PartitionBox, h: ReleasedHistogram) -> Estimate:
    return Estimate(h.cells.box_sum(q), "cell")


def ls_solve_partition(y_p: float, y_cells: Sequence[float]) -> np.ndarray:
    """Least-squares cell counts for one box observed as [total; cells].

    Closed form of (H^T H)^-1 H^T [y_p; y_cells] with H = [1...1; I]:
    x_i = y_cells_i + (y_p - sum(y_cells)) / (n_p + 1).
    """
    y_cells = np.asarray(y_cells, dtype=float)
    if y_cells.ndim != 1 or y_cells.size == 0:
        raise ValueError("need at least one cell count")
    return y_cells + (float(y_p) - y_cells.sum()) / (y_cells.size + 1)


def ls_pseudo_inverse(n_p: int) -> np.ndarray:
    """H^+ for H = [ones(1, n_p); I]: first column 1/(n_p+1), then n_p/(n_p+1) on the diagonal and -1/(n_p+1) elsewhere."""
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    d = n_p + 1
    cells = np.full((n_p, n_p), -1.0 / d)
    np.fill_diagonal(cells, n_p / d)
    return np.hstack([np.full((n_p, 1), 1.0 / d), cells])


def ls_cell_estimates(h: ReleasedHistogram) -> CellVector:
    """Per-cell least-squares estimates assembled box by box."""
    _require_subcubes(h)
    cube = h.cells.as_cube()
    out = np.empty(h.schema.shape)
    for box, y_p in zip(h.boxes, h.box_counts):
        block = cube[box.slices]
        out[box.slices] = ls_solve_partition(y_p, block.ravel()).reshape(block.shape)
    return CellVector(h.schema, out.ravel())


def uniform_cell_estimates(h: ReleasedHistogram) -> CellVector:
    """Cell counts under the uniform assumption, y_p / n_p for every cell of box p."""
    _require_subcubes(h)
    out = np.empty(h.schema.shape)
    for box, y_p in zip(h.boxes, h.box_counts):
        out[box.slices] = y_p / box.n_p
    return CellVector(h.schema, out.ravel())


def estimate_least_squares(q: PartitionBox, h: ReleasedHistogram, x_ls: CellVector | None = None) -> Estimate:
    """Query answer from the least-squares cell estimates.

    ``x_ls`` may be passed to reuse estimates across many queries.
    """
    x_ls = x_ls if x_ls is not None else ls_cell_estimates(h)
    est = x_ls.as_cube()
    parts = []
    for k, box, inter in _overlaps(q, h):
        parts.append(BoxContribution(k, inter.n_p, float(est[inter.slices].sum())))
    return Estimate(float(sum(p.value for p in parts)), "ls", tuple(parts))


def estimate(q: PartitionBox, h: ReleasedHistogram, method: str) -> Estimate:
    if method == "uniform":
        return estimate_uniform(q, h)
    if method in ("ls", "least_squares"):
        return estimate_least_squares(q, h)
    if method in ("cell", "cell_only"):
        return estimate_cell_only(q, h)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def cell_estimates(h: ReleasedHistogram, method: str) -> CellVector:
    """Per-cell estimated counts for a method; every method is linear in its cells."""
    if method == "uniform":
        return uniform_cell_estimates(h)
    if method in ("ls", "least_squares"):
        return ls_cell_estimates(h)
    if method in ("cell", "cell_only"):
        return h.cells
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
