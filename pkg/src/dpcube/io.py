"""File formats: schema JSON, record CSV, release JSON, query and result CSV."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cube import CellVector, CubeSchema, LinearQuery, PartitionBox, RecordError, record_coords
from .partition import ReleasedHistogram


class FormatError(ValueError):
    pass


def fmt(value) -> str:
    """Shortest round-trip text for numbers; other values pass through str()."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_schema(path: str | Path) -> CubeSchema:
    with open(path, encoding="utf-8") as fh:
        return CubeSchema.from_dict(json.load(fh))


def save_schema(schema: CubeSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_records(path: str | Path, schema: CubeSchema) -> list[list[str]]:
    """Rows of a header CSV reordered into schema attribute order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise FormatError(f"{path}: missing columns {missing}")
        return [[row[n] for n in schema.names] for row in reader]


def load_coords(path: str | Path, schema: CubeSchema) -> np.ndarray:
    try:
        return record_coords(read_records(path, schema), schema)
    except RecordError as exc:
        raise FormatError(f"{path}: {exc}") from None


def release_to_dict(h: ReleasedHistogram, provenance: dict | None = None) -> dict:
    out = {
        "schema": h.schema.to_dict(),
        "alpha1": h.alpha1,
        "alpha2": h.alpha2,
        "seed": h.seed,
        "xi0": h.xi0,
        "cells": [float(v) for v in h.cells.values],
        "boxes": [
            {"lo": list(b.lo), "hi": list(b.hi), "count": float(c)} for b, c in zip(h.boxes, h.box_counts)
        ],
    }
    if provenance:
        out["provenance"] = provenance
    return out


def release_from_dict(obj: dict) -> ReleasedHistogram:
    try:
        schema = CubeSchema.from_dict(obj["schema"])
        boxes = [PartitionBox(tuple(b["lo"]), tuple(b["hi"])) for b in obj.get("boxes", [])]
        counts = [float(b["count"]) for b in obj.get("boxes", [])]
        return ReleasedHistogram(
            schema,
            CellVector(schema, obj["cells"]),
            tuple(boxes),
            tuple(counts),
            alpha1=float(obj["alpha1"]),
            alpha2=None if obj.get("alpha2") is None else float(obj["alpha2"]),
            seed=obj.get("seed"),
            xi0=obj.get("xi0"),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed release: {exc}") from None


def save_release(h: ReleasedHistogram, path: str | Path, provenance: dict | None = None) -> None:
    Path(path).write_text(json.dumps(release_to_dict(h, provenance), indent=1) + "\n", encoding="utf-8")


def load_release(path: str | Path) -> ReleasedHistogram:
    with open(path, encoding="utf-8") as fh:
        return release_from_dict(json.load(fh))


def read_queries(path: str | Path, schema: CubeSchema) -> list[tuple[str, LinearQuery]]:
    """Queries from CSV with an ``id`` column and ``<attr>_lo``/``<attr>_hi`` bin-index columns."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                lo = tuple(int(row[f"{n}_lo"]) for n in schema.names)
                hi = tuple(int(row[f"{n}_hi"]) for n in schema.names)
                q = LinearQuery(lo, hi)
                schema.check_box(q)
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad query row ({exc})") from None
            out.append((row.get("id") or str(lineno - 1), q))
    return out


def write_queries(queries: Iterable[tuple[str, PartitionBox]], schema: CubeSchema, path: str | Path) -> None:
    header = ["id"] + [f"{n}_{end}" for n in schema.names for end in ("lo", "hi")]
    rows = [[qid] + [v for a, b in zip(q.lo, q.hi) for v in (a, b)] for qid, q in queries]
    write_csv(path, header, rows)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> None:
    Path(path).write_text(csv_text(header, rows, meta), encoding="utf-8")


def read_csv_table(path: str | Path) -> list[dict]:
    """Rows of a CSV written by ``write_csv``, skipping the comment line."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
