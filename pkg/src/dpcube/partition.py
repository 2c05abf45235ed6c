"""Cell partitioning, kd-tree v-optimal partitioning and the two-phase release."""

from __future__ import annotations

import math
from decimal import Decimal
from dataclasses import dataclass, field

import numpy as np

from .cube import CellVector, CubeSchema, PartitionBox, QueryMatrix, box_mask
from .privacy import (
    COUNT_SENSITIVITY,
    BudgetExceeded,
    BudgetLedger,
    NoiseSource,
    check_alpha,
    partitioned_noisy_counts,
)

#: Default share of the budget spent on the cell histogram (0.05 of 0.2).
DEFAULT_PHASE1_FRACTION = 0.25


def default_max_depth(m: int) -> int:
    return math.ceil(math.log2(max(m, 1))) + 2


def default_xi0(alpha1: float) -> float:
    """Variance threshold at twice the per-cell noise variance of the cell histogram.

    A perfectly uniform box seen through Lap(1/alpha1) noise has an expected
    cell variance of 2/alpha1**2, so thresholds below that split on noise alone.
    """
    return 4.0 / check_alpha(alpha1) ** 2


@dataclass(frozen=True)
class KdParams:
    xi0: float = 0.0
    min_cells: int = 1
    max_depth: int | None = None

    def __post_init__(self):
        if not self.xi0 >= 0:
            raise ValueError(f"xi0 must be >= 0, got {self.xi0}")
        if self.min_cells < 1:
            raise ValueError(f"min_cells must be >= 1, got {self.min_cells}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")

    def depth_cap(self, m: int) -> int:
        return self.max_depth if self.max_depth is not None else default_max_depth(m)


@dataclass
class KdNode:
    box: PartitionBox
    depth: int
    variance: float
    split_dim: int | None = None
    cut: int | None = None
    cost: float | None = None
    children: tuple["KdNode", "KdNode"] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def leaves(self) -> list["KdNode"]:
        if self.children is None:
            return [self]
        return self.children[0].leaves() + self.children[1].leaves()

    def internal_nodes(self) -> list["KdNode"]:
        if self.children is None:
            return []
        return [self] + self.children[0].internal_nodes() + self.children[1].internal_nodes()


def box_variance(values: np.ndarray) -> float:
    """Population variance of the cell counts in a box."""
    return float(np.var(values)) if values.size else 0.0


def largest_range_dim(box: PartitionBox) -> int:
    widths = box.widths
    return int(np.argmax(widths))  # first maximum, i.e. lowest index on ties


def best_cut(block: np.ndarray, dim: int) -> tuple[int, float]:
    """Best axis cut of ``block`` along ``dim``.

    Returns (offset, cost) where the left part keeps slices ``[0, offset]`` and
    cost is n1*V1 + n2*V2 with n the clamped count mass of each part. The
    leftmost cut wins ties.
    """
    moved = np.moveaxis(block, dim, 0)
    k = moved.shape[0]
    flat = moved.reshape(k, -1)
    per = flat.shape[1]
    w = np.cumsum(np.clip(flat, 0, None).sum(axis=1))
    centered = flat - flat.mean()
    s1 = np.cumsum(centered.sum(axis=1))
    s2 = np.cumsum((centered**2).sum(axis=1))
    tot1, tot2, totw = s1[-1], s2[-1], w[-1]

    best_off, best_cost = -1, math.inf
    for off in range(k - 1):
        n_left = (off + 1) * per
        n_right = (k - off - 1) * per
        var_l = max(s2[off] / n_left - (s1[off] / n_left) ** 2, 0.0)
        var_r = max((tot2 - s2[off]) / n_right - ((tot1 - s1[off]) / n_right) ** 2, 0.0)
        cost = w[off] * var_l + (totw - w[off]) * var_r
        if best_off < 0 or cost < best_cost - 1e-9 * max(abs(best_cost), 1.0):
            best_off, best_cost = off, float(cost)
    return best_off, best_cost


def kd_tree(dc: CellVector, params: KdParams | None = None) -> KdNode:
    """Recursive kd partitioning of a (noisy) cell vector.

    A box is split while its cell variance exceeds ``xi0``, it holds more than
    ``min_cells`` cells and the depth cap is not reached. The split dimension
    is the one with the widest index range; the cut minimizes the weighted
    variance of the two halves.
    """
    params = params or KdParams()
    cube = dc.as_cube()
    cap = params.depth_cap(dc.schema.m)

    def build(box: PartitionBox, depth: int) -> KdNode:
        block = cube[box.slices]
        node = KdNode(box, depth, box_variance(block))
        if node.variance <= params.xi0 or box.n_p <= params.min_cells or depth >= cap:
            return node
        dim = largest_range_dim(box)
        off, cost = best_cut(block, dim)
        node.split_dim, node.cut, node.cost = dim, box.lo[dim] + off, cost
        left, right = box.split(dim, node.cut)
        node.children = (build(left, depth + 1), build(right, depth + 1))
        return node

    return build(dc.schema.full_box(), 0)


def kd_partition(dc: CellVector, params: KdParams | None = None) -> list[PartitionBox]:
    return [leaf.box for leaf in kd_tree(dc, params).leaves()]


@dataclass(frozen=True, eq=False)
class ReleasedHistogram:
    """Noisy cell histogram plus (for the two-phase strategy) a subcube histogram.

    A cell-only release has no boxes and ``alpha2`` is None.
    """

    schema: CubeSchema
    cells: CellVector
    boxes: tuple[PartitionBox, ...] = ()
    box_counts: tuple[float, ...] = ()
    alpha1: float = 0.0
    alpha2: float | None = None
    seed: int | None = None
    xi0: float | None = None
    cell_index: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "box_counts", tuple(float(c) for c in self.box_counts))
        if len(self.boxes) != len(self.box_counts):
            raise ValueError("one noisy count per box required")
        if self.boxes:
            ids = np.full(self.schema.shape, -1, dtype=np.int64)
            for k, box in enumerate(self.boxes):
                region = ids[box.slices]
                if np.any(region >= 0):
                    raise ValueError("subcube boxes overlap")
                region[...] = k
            if np.any(ids < 0):
                raise ValueError("subcube boxes do not cover the cube")
            ids.setflags(write=False)
            object.__setattr__(self, "cell_index", ids)

    @property
    def has_subcubes(self) -> bool:
        return bool(self.boxes)

    @property
    def total_alpha(self) -> float:
        return self.alpha1 + (self.alpha2 or 0.0)

    def box_of_cell(self, coords) -> int:
        if self.cell_index is None:
            raise ValueError("release has no subcube histogram")
        return int(self.cell_index[tuple(coords)])


def release_cell_histogram(
    x: CellVector, alpha: float, ledger: BudgetLedger, src: NoiseSource, label: str = "cell histogram"
) -> CellVector:
    """Noisy count for every cell; costs ``alpha`` once since cells are disjoint."""
    alpha = check_alpha(alpha)
    ledger.charge_parallel(label, [alpha] * x.schema.m)
    noise = src.laplace(COUNT_SENSITIVITY / alpha, size=x.schema.m)
    return CellVector(x.schema, x.values + noise)


def release_cell(x: CellVector, alpha: float, ledger: BudgetLedger, src: NoiseSource) -> ReleasedHistogram:
    cells = release_cell_histogram(x, alpha, ledger, src)
    return ReleasedHistogram(x.schema, cells, alpha1=alpha, seed=src.seed)


def release_dpcube(
    x: CellVector,
    alpha1: float,
    alpha2: float,
    params: KdParams | None,
    ledger: BudgetLedger,
    src: NoiseSource,
) -> ReleasedHistogram:
    """Two-phase release: noisy cells, kd partition of the noisy cells, noisy box counts.

    The partition is computed from the phase-one output only; the raw data is
    touched again only to count the final boxes.
    """
    alpha1, alpha2 = check_alpha(alpha1), check_alpha(alpha2)
    if not ledger.can_afford(alpha1 + alpha2):
        # refuse up front so a failed release spends nothing
        raise BudgetExceeded(
            f"dpcube needs {alpha1 + alpha2:g} but only {ledger.remaining:g} of the budget remains"
        )
    if params is None:
        params = KdParams(xi0=default_xi0(alpha1))
    cells = release_cell_histogram(x, alpha1, ledger, src, label="dpcube phase I: cells")
    boxes = kd_partition(cells, params)
    counts = partitioned_noisy_counts(x, boxes, alpha2, ledger, src, label="dpcube phase II: subcubes")
    return ReleasedHistogram(
        x.schema, cells, tuple(boxes), tuple(counts), alpha1=alpha1, alpha2=alpha2, seed=src.seed, xi0=params.xi0
    )


def query_matrix_of(h: ReleasedHistogram) -> QueryMatrix:
    """Rows for the subcube boxes followed by the m identity rows of the cell histogram."""
    m = h.schema.m
    rows = [box_mask(h.schema, b).ravel() for b in h.boxes]
    rows.extend(np.eye(m, dtype=bool))
    return QueryMatrix(np.array(rows, dtype=np.int8).reshape(len(rows), m))


def split_budget(alpha: float, alpha1: float | None = None) -> tuple[float, float]:
    """Phase budgets (alpha1, alpha - alpha1); alpha1 defaults to a quarter of alpha."""
    alpha = check_alpha(alpha)
    if alpha1 is None:
        alpha1 = alpha * DEFAULT_PHASE1_FRACTION
    alpha1 = check_alpha(alpha1)
    if not alpha1 < alpha:
        raise ValueError(f"alpha1 ({alpha1}) must be smaller than alpha ({alpha})")
    # subtract the shortest decimal forms so 0.2 - 0.05 gives 0.15, not 0.15000000000000002
    return alpha1, float(Decimal(repr(alpha)) - Decimal(repr(alpha1)))
