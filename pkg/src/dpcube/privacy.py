"""Laplace mechanism, seeded noise, and privacy budget accounting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cube import CellVector, PartitionBox, box_mask

#: Sensitivity of a counting query.
COUNT_SENSITIVITY = 1.0

# Relative slack when comparing accumulated budget against the total, so that
# e.g. 0.05 + (0.2 - 0.05) is accepted under a 0.2 budget.
_BUDGET_RTOL = 1e-12

_U53 = 2.0 ** -53


class BudgetExceeded(RuntimeError):
    pass


class PartitionError(ValueError):
    pass


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > 0 or math.isnan(alpha):
        raise ValueError(f"privacy parameter must be positive, got {alpha}")
    return alpha


class NoiseSource:
    """Seeded uniform stream feeding inverse-CDF Laplace sampling.

    The same seed and the same sequence of calls always yield the same samples.
    ``position`` counts the uniforms consumed so far.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._rng = np.random.Generator(np.random.PCG64(self.seed))
        self.position = 0

    def uniform(self, size: int | None = None):
        """Uniforms strictly inside (0, 1)."""
        n = 1 if size is None else int(size)
        k = self._rng.integers(0, 2**53, size=n, dtype=np.int64)
        self.position += n
        u = (k + 0.5) * _U53
        return float(u[0]) if size is None else u

    def laplace(self, b: float, size: int | None = None):
        b = float(b)
        if not b > 0 or not math.isfinite(b):
            raise ValueError(f"Laplace scale must be positive and finite, got {b}")
        u = self.uniform(size) if size is not None else np.array([self.uniform()])
        d = u - 0.5
        out = -b * np.sign(d) * np.log1p(-2.0 * np.abs(d))
        return float(out[0]) if size is None else out


def laplace_sample(b: float, src: NoiseSource) -> float:
    return src.laplace(b)


@dataclass
class LedgerEntry:
    label: str
    alpha: float
    kind: str


@dataclass
class BudgetLedger:
    """Privacy budget state for one released artifact.

    Sequential charges add. A parallel group over disjoint subsets of the data
    costs the largest member charge. Charges that would overrun the total are
    refused; the ledger is never reset.
    """

    total_alpha: float
    spent: float = 0.0
    log: list[LedgerEntry] = field(default_factory=list)

    def __post_init__(self):
        self.total_alpha = check_alpha(self.total_alpha)

    @property
    def remaining(self) -> float:
        return max(self.total_alpha - self.spent, 0.0)

    def can_afford(self, alpha: float) -> bool:
        return self.spent + alpha <= self.total_alpha * (1 + _BUDGET_RTOL)

    def charge(self, label: str, alpha: float, kind: str = "sequential") -> None:
        alpha = check_alpha(alpha)
        if not self.can_afford(alpha):
            raise BudgetExceeded(
                f"{label}: charging {alpha:g} would exceed the budget "
                f"({self.spent:g} of {self.total_alpha:g} spent)"
            )
        self.spent += alpha
        self.log.append(LedgerEntry(label, alpha, kind))

    def charge_parallel(self, label: str, alphas: Sequence[float]) -> None:
        """Charge a group of mechanisms that each touch a disjoint data subset."""
        if len(alphas) == 0:
            raise ValueError("empty parallel group")
        self.charge(label, max(check_alpha(a) for a in alphas), kind="parallel")

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"label": e.label, "alpha": e.alpha, "kind": e.kind}) + "\n" for e in self.log
        )


def noisy_count(
    true_count: float,
    alpha: float,
    ledger: BudgetLedger,
    src: NoiseSource,
    sensitivity: float = COUNT_SENSITIVITY,
    label: str = "noisy_count",
) -> float:
    """Laplace mechanism for one query: charges ``alpha`` sequentially."""
    alpha = check_alpha(alpha)
    ledger.charge(label, alpha)
    return float(true_count) + src.laplace(sensitivity / alpha)


def check_partition(schema, boxes: Sequence[PartitionBox]) -> None:
    """Raise PartitionError unless ``boxes`` are pairwise disjoint and cover the cube."""
    if not boxes:
        raise PartitionError("no boxes given")
    cover = np.zeros(schema.shape, dtype=np.int32)
    for box in boxes:
        cover += box_mask(schema, box)
    if np.any(cover > 1):
        raise PartitionError("boxes overlap")
    if np.any(cover == 0):
        raise PartitionError("boxes do not cover the cube")


def partitioned_noisy_counts(
    x: CellVector,
    boxes: Sequence[PartitionBox],
    alpha: float,
    ledger: BudgetLedger,
    src: NoiseSource,
    label: str = "partition",
) -> list[float]:
    """One noisy count per box of a disjoint covering partition.

    Noise is drawn from consecutive stream positions in box order. The group
    costs ``alpha`` once.
    """
    alpha = check_alpha(alpha)
    check_partition(x.schema, boxes)
    ledger.charge_parallel(label, [alpha] * len(boxes))
    cube = x.as_cube()
    noise = src.laplace(COUNT_SENSITIVITY / alpha, size=len(boxes))
    return [float(cube[b.slices].sum()) + float(n) for b, n in zip(boxes, noise)]
