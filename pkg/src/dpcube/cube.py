"""Data cube model: attribute domains, cell indexing, count vectors, boxes and range queries.

Cells are linearized in row-major order with the dimension order fixed by the
schema declaration (the last attribute varies fastest).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class SchemaError(ValueError):
    pass


class RecordError(ValueError):
    """A record could not be mapped to a cell."""

    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class AttributeDomain:
    name: str
    bins: tuple[str, ...]
    bin_edges: tuple[float, ...] | None = None

    def __post_init__(self):
        bins = tuple(str(b) for b in self.bins)
        object.__setattr__(self, "bins", bins)
        if not bins:
            raise SchemaError(f"attribute {self.name!r} has no bins")
        if len(set(bins)) != len(bins):
            raise SchemaError(f"attribute {self.name!r} has duplicate bin labels")
        if self.bin_edges is not None:
            edges = tuple(float(e) for e in self.bin_edges)
            object.__setattr__(self, "bin_edges", edges)
            if len(edges) != len(bins) + 1:
                raise SchemaError(f"attribute {self.name!r}: need {len(bins) + 1} edges, got {len(edges)}")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise SchemaError(f"attribute {self.name!r}: edges must strictly increase")

    @classmethod
    def from_edges(cls, name: str, edges: Sequence[float]) -> "AttributeDomain":
        edges = [float(e) for e in edges]
        if len(edges) < 2:
            raise SchemaError(f"attribute {name!r}: need at least two edges")
        labels = [f"[{a:g},{b:g})" for a, b in zip(edges, edges[1:])]
        labels[-1] = labels[-1][:-1] + "]"
        return cls(name, tuple(labels), tuple(edges))

    @property
    def size(self) -> int:
        return len(self.bins)

    def bin_of(self, value) -> int:
        """Bin index of a raw value; raises KeyError when the value falls outside the domain."""
        if self.bin_edges is not None:
            try:
                v = float(value)
            except (TypeError, ValueError):
                raise KeyError(value) from None
            edges = self.bin_edges
            if math.isnan(v) or v < edges[0] or v > edges[-1]:
                raise KeyError(value)
            if v == edges[-1]:
                return len(self.bins) - 1
            return bisect.bisect_right(edges, v) - 1
        try:
            return self._index[str(value)]
        except KeyError:
            raise KeyError(value) from None

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_label_index")
        if idx is None:
            idx = {b: i for i, b in enumerate(self.bins)}
            object.__setattr__(self, "_label_index", idx)
        return idx


@dataclass(frozen=True)
class CubeSchema:
    dims: tuple[AttributeDomain, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise SchemaError("schema needs at least one attribute")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.size for d in self.dims)

    @property
    def m(self) -> int:
        return math.prod(self.shape)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def dim_index(self, name: str) -> int:
        for i, d in enumerate(self.dims):
            if d.name == name:
                return i
        raise KeyError(f"no attribute named {name!r}")

    def index_of(self, coords: Sequence[int]) -> int:
        if len(coords) != self.ndim:
            raise ValueError(f"expected {self.ndim} coordinates, got {len(coords)}")
        for c, n in zip(coords, self.shape):
            if not 0 <= c < n:
                raise IndexError(f"coordinate {tuple(coords)} outside shape {self.shape}")
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def coord_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.m:
            raise IndexError(f"cell index {index} outside [0, {self.m})")
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def full_box(self) -> "PartitionBox":
        return PartitionBox((0,) * self.ndim, tuple(n - 1 for n in self.shape))

    def cell_boxes(self) -> list["PartitionBox"]:
        return [PartitionBox(c, c) for c in np.ndindex(*self.shape)]

    def check_box(self, box: "PartitionBox") -> None:
        if len(box.lo) != self.ndim:
            raise ValueError(f"box has {len(box.lo)} dimensions, schema has {self.ndim}")
        for d, (lo, hi, n) in enumerate(zip(box.lo, box.hi, self.shape)):
            if hi >= n:
                raise ValueError(f"box upper bound {hi} out of range for dimension {d} (size {n})")

    def to_dict(self) -> dict:
        attrs = []
        for d in self.dims:
            if d.bin_edges is not None:
                attrs.append({"name": d.name, "edges": list(d.bin_edges)})
            else:
                attrs.append({"name": d.name, "bins": list(d.bins)})
        return {"attributes": attrs}

    @classmethod
    def from_dict(cls, obj: dict) -> "CubeSchema":
        try:
            attrs = obj["attributes"]
        except (KeyError, TypeError):
            raise SchemaError("schema object needs an 'attributes' list") from None
        dims = []
        for a in attrs:
            if "edges" in a:
                dims.append(AttributeDomain.from_edges(a["name"], a["edges"]))
            elif "bins" in a:
                dims.append(AttributeDomain(a["name"], tuple(a["bins"])))
            else:
                raise SchemaError(f"attribute {a.get('name')!r} needs 'bins' or 'edges'")
        return cls(tuple(dims))

    @classmethod
    def from_shape(cls, shape: Sequence[int], names: Sequence[str] | None = None) -> "CubeSchema":
        """Schema with integer bin labels, handy for synthetic cubes."""
        names = names or [f"a{i}" for i in range(len(shape))]
        return cls(tuple(AttributeDomain(nm, tuple(str(j) for j in range(n))) for nm, n in zip(names, shape)))


@dataclass(frozen=True)
class PartitionBox:
    """Axis-aligned sub-cube with inclusive per-dimension bounds."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must have the same non-zero length")
        for a, b in zip(lo, hi):
            if not 0 <= a <= b:
                raise ValueError(f"invalid box bounds lo={lo} hi={hi}")

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def n_p(self) -> int:
        return math.prod(self.widths)

    @property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, b + 1) for a, b in zip(self.lo, self.hi))

    def contains(self, coords: Sequence[int]) -> bool:
        return all(a <= c <= b for a, b, c in zip(self.lo, self.hi, coords))

    def intersect(self, other: "PartitionBox") -> "PartitionBox | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return PartitionBox(lo, hi)

    def overlap(self, other: "PartitionBox") -> int:
        box = self.intersect(other)
        return 0 if box is None else box.n_p

    def split(self, dim: int, cut: int) -> tuple["PartitionBox", "PartitionBox"]:
        """Split so the left child ends at bin ``cut`` on ``dim``."""
        if not self.lo[dim] <= cut < self.hi[dim]:
            raise ValueError(f"cut {cut} not inside dimension {dim} range [{self.lo[dim]}, {self.hi[dim]})")
        left_hi = list(self.hi)
        left_hi[dim] = cut
        right_lo = list(self.lo)
        right_lo[dim] = cut + 1
        return PartitionBox(self.lo, tuple(left_hi)), PartitionBox(tuple(right_lo), self.hi)


class LinearQuery(PartitionBox):
    """Axis-range counting query; ``s`` is the number of cells it covers."""

    @property
    def s(self) -> int:
        return self.n_p

    def vector(self, schema: CubeSchema) -> np.ndarray:
        return box_mask(schema, self).ravel().astype(float)


def box_mask(schema: CubeSchema, box: PartitionBox) -> np.ndarray:
    schema.check_box(box)
    mask = np.zeros(schema.shape, dtype=bool)
    mask[box.slices] = True
    return mask


def cells_in_box(schema: CubeSchema, box: PartitionBox) -> list[int]:
    """Linear indices of the cells inside ``box``, ascending."""
    return [int(i) for i in np.flatnonzero(box_mask(schema, box))]


@dataclass(frozen=True, eq=False)
class CellVector:
    schema: CubeSchema
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.shape != (self.schema.m,):
            raise ValueError(f"expected {self.schema.m} cell values, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, schema: CubeSchema) -> "CellVector":
        return cls(schema, np.zeros(schema.m))

    def as_cube(self) -> np.ndarray:
        return self.values.reshape(self.schema.shape)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def box_sum(self, box: PartitionBox) -> float:
        self.schema.check_box(box)
        return float(self.as_cube()[box.slices].sum())

    def is_counts(self) -> bool:
        v = self.values
        return bool(np.all(v >= 0) and np.all(v == np.round(v)))

    def __len__(self):
        return self.schema.m


def record_coords(records: Iterable[Sequence], schema: CubeSchema) -> np.ndarray:
    """Cell coordinates of each record, shape (n_records, ndim).

    Each record holds one value per attribute in schema order. Attributes with
    edges are discretized, others are matched against bin labels.
    """
    ndim = schema.ndim
    rows = []
    for i, rec in enumerate(records):
        if len(rec) != ndim:
            raise RecordError(i, f"expected {ndim} values, got {len(rec)}")
        coords = []
        for dom, value in zip(schema.dims, rec):
            try:
                coords.append(dom.bin_of(value))
            except KeyError:
                raise RecordError(i, f"value {value!r} outside the bins of {dom.name!r}") from None
        rows.append(coords)
    return np.array(rows, dtype=np.int64).reshape(len(rows), ndim)


def counts_from_coords(coords: np.ndarray, schema: CubeSchema) -> CellVector:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, schema.ndim)
    flat = np.ravel_multi_index(tuple(coords.T), schema.shape) if len(coords) else np.zeros(0, dtype=np.int64)
    return CellVector(schema, np.bincount(flat, minlength=schema.m))


def ingest(records: Iterable[Sequence], schema: CubeSchema) -> CellVector:
    """Exact per-cell counts of ``records``."""
    return counts_from_coords(record_coords(records, schema), schema)


def evaluate_query(q: PartitionBox, x: CellVector) -> float:
    """Exact answer sum_{i in q} x_i."""
    return x.box_sum(q)


@dataclass(frozen=True, eq=False)
class QueryMatrix:
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int8)
        if rows.ndim != 2:
            raise ValueError("query matrix must be two dimensional")
        if not np.all(rows.sum(axis=1) >= 1):
            raise ValueError("every query row needs at least one cell")
        if not np.all((rows == 0) | (rows == 1)):
            raise ValueError("query rows must be 0/1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def to_csv(self) -> str:
        return "".join(",".join(str(int(v)) for v in row) + "\n" for row in self.rows)
