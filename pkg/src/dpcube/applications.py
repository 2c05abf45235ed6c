"""Downstream uses of a released histogram: ID3 classification and blocking for record linkage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cube import CellVector, CubeSchema, PartitionBox
from .estimate import cell_estimates
from .partition import ReleasedHistogram

# Gains (in bits) closer than this are treated as ties.
GAIN_TIE_TOL = 1e-9


@dataclass(frozen=True)
class LabeledSchema:
    schema: CubeSchema
    class_dim: int
    features: tuple[int, ...] = ()

    def __post_init__(self):
        nd = self.schema.ndim
        if not 0 <= self.class_dim < nd:
            raise ValueError(f"class dimension {self.class_dim} out of range")
        if self.schema.shape[self.class_dim] < 2:
            raise ValueError("class attribute needs at least two bins")
        feats = tuple(self.features) or tuple(d for d in range(nd) if d != self.class_dim)
        if self.class_dim in feats:
            raise ValueError("class dimension cannot also be a feature")
        if any(not 0 <= f < nd for f in feats):
            raise ValueError("feature dimension out of range")
        object.__setattr__(self, "features", feats)

    @classmethod
    def by_name(cls, schema: CubeSchema, class_name: str, features: Sequence[str] = ()) -> "LabeledSchema":
        return cls(schema, schema.dim_index(class_name), tuple(schema.dim_index(f) for f in features))


@dataclass
class TreeNode:
    label: int
    mass: float
    feature: int | None = None
    children: dict[int, "TreeNode"] = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(c.depth() for c in self.children.values())

    def predict(self, coords: Sequence[int]) -> int:
        node = self
        while not node.is_leaf:
            node = node.children[coords[node.feature]]
        return node.label

    def to_dict(self) -> dict:
        out: dict = {"label": self.label, "mass": self.mass}
        if not self.is_leaf:
            out["feature"] = self.feature
            out["children"] = {str(k): c.to_dict() for k, c in sorted(self.children.items())}
        return out

    def same_structure(self, other: "TreeNode") -> bool:
        if self.label != other.label or self.feature != other.feature:
            return False
        if self.children.keys() != other.children.keys():
            return False
        return all(c.same_structure(other.children[k]) for k, c in self.children.items())


def entropy(counts: np.ndarray) -> float:
    """Shannon entropy in bits of a (possibly fractional) class-count vector."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def information_gain(table: np.ndarray) -> float:
    """Gain of splitting on a feature given its (value, class) count table."""
    table = np.asarray(table, dtype=float)
    total = table.sum()
    if total <= 0:
        return 0.0
    parent = entropy(table.sum(axis=0))
    rows = table.sum(axis=1)
    children = sum(r / total * entropy(row) for r, row in zip(rows, table) if r > 0)
    return parent - children


def _argmax_first(values: np.ndarray) -> int:
    values = np.asarray(values, dtype=float)
    top = values.max()
    return int(np.flatnonzero(values >= top - GAIN_TIE_TOL * max(abs(top), 1.0))[0])


def train_id3(
    counts: CellVector | ReleasedHistogram,
    ls: LabeledSchema,
    max_depth: int | None = None,
    method: str = "uniform",
) -> TreeNode:
    """ID3 with information gain on per-cell counts.

    Counts are clamped at 0 and used fractionally as instance weights. For a
    release, per-cell counts come from ``method`` (falling back to the cell
    histogram when the release has no subcubes).
    """
    if isinstance(counts, ReleasedHistogram):
        if not counts.has_subcubes:
            method = "cell"
        counts = cell_estimates(counts, method)
    if counts.schema != ls.schema:
        raise ValueError("counts and labeled schema differ")
    cube = np.clip(counts.as_cube(), 0, None)
    # axes: features in order, then class
    data = np.moveaxis(cube, [*ls.features, ls.class_dim], range(len(ls.features) + 1))
    extra = tuple(range(len(ls.features) + 1, data.ndim))
    if extra:
        data = data.sum(axis=extra)
    n_feat = len(ls.features)
    cap = n_feat if max_depth is None else min(max_depth, n_feat)
    n_classes = data.shape[-1]
    prior = np.ones(n_classes)

    def build(sub: np.ndarray, free: list[int], depth: int, parent_label: int) -> TreeNode:
        class_counts = sub.reshape(-1, n_classes).sum(axis=0)
        mass = float(class_counts.sum())
        label = _argmax_first(class_counts) if mass > 0 else parent_label
        node = TreeNode(label, mass)
        if mass <= 0 or depth >= cap or not free or np.count_nonzero(class_counts) <= 1:
            return node
        gains = []
        for j in free:
            axes = tuple(a for a in range(n_feat) if a != j)
            table = sub.sum(axis=axes) if axes else sub
            gains.append(information_gain(table))
        gains = np.array(gains)
        if gains.max() <= GAIN_TIE_TOL:
            return node
        best = free[_argmax_first(gains)]
        node.feature = ls.features[best]
        rest = [j for j in free if j != best]
        for v in range(sub.shape[best]):
            child = np.take(sub, [v], axis=best)
            node.children[v] = build(child, rest, depth + 1, label)
        return node

    return build(data, list(range(n_feat)), 0, _argmax_first(prior))


def accuracy(tree: TreeNode, ls: LabeledSchema, records_coords: np.ndarray) -> float:
    """Fraction of records (rows of cell coordinates) whose class the tree predicts."""
    coords = np.asarray(records_coords, dtype=np.int64)
    if coords.size == 0:
        raise ValueError("no records to score")
    hits = sum(tree.predict(row) == row[ls.class_dim] for row in coords)
    return hits / len(coords)


@dataclass(frozen=True)
class BlockAssignment:
    blocks: tuple[PartitionBox, ...]
    counts_a: tuple[int, ...]
    counts_b: tuple[int, ...]

    def __post_init__(self):
        if not len(self.blocks) == len(self.counts_a) == len(self.counts_b):
            raise ValueError("one count per block and dataset required")
        if min(self.counts_a + self.counts_b, default=0) < 0:
            raise ValueError("block counts must be >= 0")

    @property
    def k(self) -> int:
        return len(self.blocks)


def reduction_ratio(a: BlockAssignment | tuple[Sequence[float], Sequence[float]]) -> float:
    """1 - sum(n_i * m_i) / (n * m): share of cross-dataset pairs removed by blocking."""
    if isinstance(a, BlockAssignment):
        na, nb = a.counts_a, a.counts_b
    else:
        na, nb = a
    na = np.asarray(na, dtype=float)
    nb = np.asarray(nb, dtype=float)
    n, m = na.sum(), nb.sum()
    if n <= 0 or m <= 0:
        raise ValueError("both datasets must be non-empty")
    return float(1.0 - (na * nb).sum() / (n * m))


def assign_blocks(coords_a: np.ndarray, coords_b: np.ndarray, h: ReleasedHistogram) -> BlockAssignment:
    """Tally each dataset's records (as cell coordinates) per subcube box of the release."""
    if not h.has_subcubes:
        raise ValueError("blocking needs a release with subcube boxes")
    k = len(h.boxes)
    tallies = []
    for coords in (coords_a, coords_b):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, h.schema.ndim)
        if len(coords) == 0:
            raise ValueError("both datasets must be non-empty")
        if np.any(coords < 0) or np.any(coords >= np.array(h.schema.shape)):
            raise ValueError("record outside the schema domain")
        ids = h.cell_index[tuple(coords.T)]
        tallies.append(tuple(int(c) for c in np.bincount(ids, minlength=k)))
    return BlockAssignment(h.boxes, tallies[0], tallies[1])
