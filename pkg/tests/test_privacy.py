import math

import numpy as np
import pytest
from scipy import stats

from dpcube.cube import CellVector, CubeSchema, PartitionBox
from dpcube.privacy import (
    BudgetExceeded,
    BudgetLedger,
    NoiseSource,
    PartitionError,
    laplace_sample,
    noisy_count,
    partitioned_noisy_counts,
)


def test_laplace_mean_abs_is_scale():
    s = NoiseSource(11).laplace(1.0, size=100_000)
    assert 0.97 <= np.abs(s).mean() <= 1.03


def test_laplace_tail_at_ln2():
    # Pr[|N| > t] = exp(-t/b) = 0.5 at t = b ln 2
    s = NoiseSource(12).laplace(1.0, size=100_000)
    assert abs(np.mean(np.abs(s) > math.log(2)) - 0.5) <= 0.01


def test_laplace_ks():
    s = NoiseSource(13).laplace(2.5, size=10_000)
    assert stats.kstest(s, stats.laplace(scale=2.5).cdf).pvalue > 0.01


def test_laplace_deterministic():
    a, b = NoiseSource(99), NoiseSource(99)
    assert [laplace_sample(1.0, a) for _ in range(5)] == [laplace_sample(1.0, b) for _ in range(5)]
    assert a.position == 5
    assert np.array_equal(NoiseSource(3).laplace(1.0, size=10), NoiseSource(3).laplace(1.0, size=10))


def test_laplace_rejects_bad_scale():
    for b in (0.0, -1.0, math.inf):
        with pytest.raises(ValueError):
            NoiseSource(0).laplace(b)


def test_uniform_stays_open():
    u = NoiseSource(0).uniform(100_000)
    assert u.min() > 0 and u.max() < 1


def test_noisy_count_vanishing_noise():
    ledger = BudgetLedger(1e9)
    assert abs(noisy_count(10, 1e9, ledger, NoiseSource(1)) - 10) < 1e-6
    assert ledger.spent == 1e9


def test_noisy_count_mean_zero():
    src = NoiseSource(5)
    vals = [noisy_count(0, 1.0, BudgetLedger(1.0), src) for _ in range(10_000)]
    assert abs(np.mean(vals)) < 0.05


def test_sequential_exhaustion():
    ledger, src = BudgetLedger(1.0), NoiseSource(0)
    noisy_count(3, 0.5, ledger, src)
    noisy_count(3, 0.5, ledger, src)
    with pytest.raises(BudgetExceeded):
        noisy_count(3, 0.5, ledger, src)
    assert ledger.spent == 1.0
    assert len(ledger.log) == 2


def test_ledger_parallel_group_costs_max():
    ledger = BudgetLedger(1.0)
    ledger.charge_parallel("group", [0.2, 0.5, 0.3])
    assert ledger.spent == 0.5
    assert ledger.log[-1].kind == "parallel"
    assert '"kind": "parallel"' in ledger.to_jsonl()


def test_ledger_rejects_nonpositive_alpha():
    with pytest.raises(ValueError):
        BudgetLedger(0.0)
    with pytest.raises(ValueError):
        BudgetLedger(1.0).charge("x", -0.1)


def test_partitioned_counts_charge_once(example_x, example_schema):
    ledger = BudgetLedger(1.0)
    out = partitioned_noisy_counts(example_x, example_schema.cell_boxes(), 0.5, ledger, NoiseSource(0))
    assert len(out) == 9
    assert ledger.spent == 0.5


def test_partitioned_full_box(example_x, example_schema):
    ledger = BudgetLedger(1e9)
    (total,) = partitioned_noisy_counts(example_x, [example_schema.full_box()], 1e9, ledger, NoiseSource(0))
    assert abs(total - 141) < 1e-6


def test_partitioned_rejects_overlap_and_gaps(example_x):
    ledger = BudgetLedger(1.0)
    overlapping = [PartitionBox((0, 0), (1, 2)), PartitionBox((1, 0), (2, 2))]
    with pytest.raises(PartitionError):
        partitioned_noisy_counts(example_x, overlapping, 0.5, ledger, NoiseSource(0))
    with pytest.raises(PartitionError):
        partitioned_noisy_counts(example_x, [PartitionBox((0, 0), (1, 2))], 0.5, ledger, NoiseSource(0))
    assert ledger.spent == 0


def test_noise_independent_across_boxes():
    schema = CubeSchema.from_shape((2,))
    x = CellVector(schema, [0, 0])
    boxes = schema.cell_boxes()
    src = NoiseSource(21)
    pairs = np.array([partitioned_noisy_counts(x, boxes, 1.0, BudgetLedger(1.0), src) for _ in range(10_000)])
    r = np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1]
    assert abs(r) < 0.05
