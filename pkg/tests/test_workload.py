import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpcube.analysis import cell_usefulness_alpha
from dpcube.cube import CellVector, CubeSchema, PartitionBox, evaluate_query
from dpcube.estimate import estimate
from dpcube.partition import KdParams, release_cell, release_dpcube
from dpcube.privacy import BudgetLedger, NoiseSource
from dpcube.workload import (
    answers,
    avg_abs_error,
    empirical_usefulness,
    estimates,
    generate_workload,
    size_bands,
    weighted_variance,
)

from conftest import EXAMPLE_X


def test_workload_basic():
    schema = CubeSchema.from_shape((10, 12))
    w = generate_workload(schema, 100_000, seed=1)
    assert len(w) == 100_000
    lo, hi = w.lo_hi()
    assert np.all(lo <= hi) and np.all(hi < np.array(schema.shape)) and np.all(lo >= 0)
    again = generate_workload(schema, 100_000, seed=1)
    assert again.queries == w.queries


def test_workload_range_distribution_uniform_over_pairs():
    schema = CubeSchema.from_shape((4,))
    w = generate_workload(schema, 50_000, seed=2)
    lo, hi = w.lo_hi()
    pairs = list(zip(lo[:, 0].tolist(), hi[:, 0].tolist()))
    freq = np.array([pairs.count(p) for p in itertools.combinations_with_replacement(range(4), 2)])
    assert freq.size == 10
    assert np.all(np.abs(freq / len(pairs) - 0.1) < 0.01)


def test_workload_size_filter():
    schema = CubeSchema.from_shape((3, 3))
    w = generate_workload(schema, 20, seed=3, size_filter=(9, 9))
    full = schema.full_box()
    assert all((q.lo, q.hi) == (full.lo, full.hi) for q in w.queries)
    band = generate_workload(schema, 200, seed=3, size_filter=(2, 4))
    assert set(band.sizes().tolist()) <= {2, 3, 4}
    with pytest.raises(ValueError):
        generate_workload(CubeSchema.from_shape((3, 3)), 5, seed=0, size_filter=(5, 5))
    with pytest.raises(ValueError):
        generate_workload(schema, 0, seed=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vectorized_answers_match_direct(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(int(n) for n in rng.integers(1, 6, size=rng.integers(1, 4)))
    schema = CubeSchema.from_shape(shape)
    x = CellVector(schema, rng.normal(10, 5, size=schema.m))
    w = generate_workload(schema, 50, seed=seed)
    assert np.allclose(answers(w, x), [evaluate_query(q, x) for q in w.queries])


def test_vectorized_estimates_match_per_query(example_schema, example_x):
    h = release_dpcube(example_x, 0.5, 0.5, KdParams(xi0=50), BudgetLedger(1.0), NoiseSource(6))
    w = generate_workload(example_schema, 200, seed=1)
    for method in ("uniform", "ls", "cell"):
        direct = [estimate(q, h, method).value for q in w.queries]
        assert np.allclose(estimates(w, h, method), direct)


def test_noise_free_release_has_zero_error(example_schema, example_x):
    h = release_dpcube(example_x, 1e9, 1e9, KdParams(xi0=1e-6), BudgetLedger(2e9), NoiseSource(0))
    w = generate_workload(example_schema, 500, seed=4)
    for method in ("ls", "cell"):
        assert avg_abs_error(w, example_x, h, method) < 1e-5
    assert empirical_usefulness(w, example_x, h, "ls", float(np.finfo(float).max)) == 1.0


def test_zero_epsilon_usefulness(example_schema, example_x):
    h = release_cell(example_x, 1.0, BudgetLedger(1.0), NoiseSource(0))
    w = generate_workload(example_schema, 500, seed=4)
    assert empirical_usefulness(w, example_x, h, "cell", 0.0) == 0.0
    assert empirical_usefulness(w, example_x, h, "cell", float("inf")) == 1.0


def test_cell_error_grows_with_size():
    schema = CubeSchema.from_shape((8, 8))
    x = CellVector(schema, np.full(64, 10.0))
    bands = size_bands(64)
    means = []
    for a, b in bands:
        w = generate_workload(schema, 400, seed=a, size_filter=(a, b))
        errs = [avg_abs_error(w, x, release_cell(x, 1.0, BudgetLedger(1.0), NoiseSource(s)), "cell")
                for s in range(30)]
        means.append(np.mean(errs))
    assert means == sorted(means)


def test_cell_error_matches_bilateral_gamma_mean():
    """Mean |sum of s Lap(1/alpha)| per size equals the integral of |z| f_s(z)."""
    from dpcube.analysis import SmoothnessParams, uniform_error_general

    schema = CubeSchema.from_shape((16,))
    x = CellVector(schema, np.zeros(16))
    for s in (1, 4, 9):
        w = generate_workload(schema, 200, seed=s, size_filter=(s, s))
        errs = np.concatenate([
            np.abs(estimates(w, release_cell(x, 0.5, BudgetLedger(0.5), NoiseSource(k)), "cell"))[:1]
            for k in range(3000)
        ])
        expect = uniform_error_general(SmoothnessParams(n_p=16, s=s, alpha1=0.5, eta=0.0))
        assert abs(errs.mean() - expect) <= 3 * errs.std() / np.sqrt(len(errs))


def test_weighted_variance_examples(example_schema, example_x):
    x = np.array(EXAMPLE_X, dtype=float)
    expected = x.sum() * ((x - x.mean()) ** 2).mean()
    assert weighted_variance([example_schema.full_box()], example_x) == pytest.approx(expected)
    assert weighted_variance([example_schema.full_box()], example_x) == pytest.approx(45590.0)
    assert weighted_variance(example_schema.cell_boxes(), example_x) == 0
    flat = CellVector(example_schema, np.full(9, 3.0))
    assert weighted_variance([PartitionBox((0, 0), (0, 2)), PartitionBox((1, 0), (2, 2))], flat) == 0


def test_weighted_variance_can_drop_on_merge():
    # count weights make the metric non-monotone: [0] | [0, 1] costs 0.25, the merged box 2/9
    schema = CubeSchema.from_shape((3,))
    x = CellVector(schema, [0, 0, 1])
    left, right = schema.full_box().split(0, 0)
    assert weighted_variance([left, right], x) == pytest.approx(0.25)
    assert weighted_variance([schema.full_box()], x) == pytest.approx(2 / 9)


def test_weighted_variance_nested_kd_partitions():
    """Coarser kd partitions of the same noisy cells never lower the metric on smooth data."""
    from dpcube.synthetic import smooth_cube

    x = smooth_cube((8, 8), 10_000, 2, seed=3)
    h = release_dpcube(x, 0.05, 0.15, KdParams(xi0=0), BudgetLedger(0.2), NoiseSource(3))
    from dpcube.partition import kd_partition

    vals = [weighted_variance(kd_partition(h.cells, KdParams(xi0=t)), x) for t in (0, 200, 800, 1600, 1e9)]
    assert vals == sorted(vals)
    assert vals[-1] > vals[0]


def test_size_bands():
    assert size_bands(64) == [(1, 16), (17, 32), (33, 48), (49, 64)]
    assert size_bands(3) == [(1, 1), (2, 2), (3, 3)]


def test_cell_usefulness_alpha_holds():
    schema = CubeSchema.from_shape((3, 3))
    x = CellVector(schema, EXAMPLE_X)
    alpha = cell_usefulness_alpha(9, 10, 0.05)
    w = generate_workload(schema, 300, seed=9)
    fracs = [empirical_usefulness(w, x, release_cell(x, alpha, BudgetLedger(alpha), NoiseSource(s)), "cell", 10)
             for s in range(100)]
    assert np.mean(fracs) >= 0.95
