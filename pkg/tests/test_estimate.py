import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpcube.cube import CellVector, CubeSchema, LinearQuery, PartitionBox
from dpcube.estimate import (
    estimate,
    estimate_cell_only,
    estimate_least_squares,
    estimate_uniform,
    ls_cell_estimates,
    ls_pseudo_inverse,
    ls_solve_partition,
)
from dpcube.partition import KdParams, ReleasedHistogram, query_matrix_of, release_dpcube
from dpcube.privacy import BudgetLedger, NoiseSource

from conftest import EXAMPLE_BOXES, EXAMPLE_X


def normal_equations(y_p, y_cells):
    """Dense oracle: solve (H^T H) x = H^T y for H = [ones; I]."""
    n = len(y_cells)
    H = np.vstack([np.ones((1, n)), np.eye(n)])
    y = np.concatenate([[y_p], y_cells])
    return np.linalg.solve(H.T @ H, H.T @ y), H, y


def example_release(schema, counts=(51.0, 37.0, 53.0, 0.0), cells=EXAMPLE_X):
    return ReleasedHistogram(schema, CellVector(schema, cells), tuple(EXAMPLE_BOXES), counts, 0.05, 0.15)


def test_uniform_q2_running_example(example_schema):
    y = (12.0, 37.0, 53.0, 8.0)
    h = example_release(example_schema, y)
    q2 = LinearQuery((0, 1), (2, 1))
    est = estimate_uniform(q2, h)
    assert est.value == pytest.approx(y[0] / 2 + y[3] / 2)
    assert [(c.box_id, c.s) for c in est.per_box] == [(0, 1), (3, 2)]
    assert est.value == pytest.approx(sum(c.value for c in est.per_box))


def test_uniform_whole_box_and_single_cell(example_schema):
    h = example_release(example_schema, (51.0, 37.0, 53.0, 40.0))
    assert estimate_uniform(PartitionBox((1, 1), (2, 2)), h).value == 40.0
    assert estimate_uniform(LinearQuery((2, 2), (2, 2)), h).value == 10.0


def test_cell_only(example_schema, example_x):
    h = example_release(example_schema)
    assert estimate_cell_only(LinearQuery((0, 1), (2, 1)), h).value == 21
    assert estimate_cell_only(LinearQuery((1, 2), (1, 2)), h).value == 0
    assert estimate_cell_only(example_schema.full_box(), h).value == 141


def test_ls_examples():
    assert ls_solve_partition(4, [2]).tolist() == [3.0]
    x = ls_solve_partition(9, [3, 3])
    assert x.tolist() == [4.0, 4.0]
    ref, H, y = normal_equations(9, [3, 3])
    assert np.allclose(x, ref)
    assert np.allclose(H.T @ (H @ x - y), 0)
    assert ls_solve_partition(6, [1, 2, 3]).tolist() == [1, 2, 3]


@pytest.mark.parametrize("n_p", [1, 2, 3, 5, 11])
def test_ls_matches_dense_solver(n_p):
    rng = np.random.default_rng(n_p)
    y_cells = rng.normal(20, 10, size=n_p)
    y_p = rng.normal(y_cells.sum(), 10)
    ref, H, y = normal_equations(y_p, y_cells)
    got = ls_solve_partition(y_p, y_cells)
    assert np.allclose(got, ref, rtol=1e-9, atol=0)
    assert np.allclose(ls_pseudo_inverse(n_p), np.linalg.pinv(H), atol=1e-12)
    resid = H.T @ (H @ got - y)
    assert np.max(np.abs(resid)) <= 1e-9 * max(np.abs(y).max(), 1)


def _block_release(seed, shape):
    rng = np.random.default_rng(seed)
    schema = CubeSchema.from_shape(shape)
    x = CellVector(schema, rng.integers(0, 30, size=schema.m))
    return release_dpcube(x, 0.5, 0.5, KdParams(xi0=20), BudgetLedger(1.0), NoiseSource(seed)), x


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_per_box_ls_equals_global_ls(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(int(n) for n in rng.integers(1, 5, size=2))
    h, _ = _block_release(seed, shape)
    H = query_matrix_of(h).rows.astype(float)
    y = np.concatenate([h.box_counts, h.cells.values])
    global_ls = np.linalg.pinv(H) @ y
    assert np.allclose(ls_cell_estimates(h).values, global_ls, atol=1e-9 * max(1, np.abs(y).max()))


def test_ls_noise_free_is_exact(example_schema, example_x):
    h = release_dpcube(example_x, 1e9, 1e9, KdParams(xi0=1e-6), BudgetLedger(2e9), NoiseSource(2))
    q2 = LinearQuery((0, 1), (2, 1))
    assert estimate_least_squares(q2, h).value == pytest.approx(21, abs=1e-6)
    assert estimate(q2, h, "ls").value == pytest.approx(21, abs=1e-6)


def test_ls_full_box_weights(example_schema):
    # over a whole box the LS answer weights y_p by n_p/(n_p+1) and the cell sum by 1/(n_p+1)
    h = example_release(example_schema, (40.0, 30.0, 70.0, 9.0), cells=[11, 20, 35, 22, 1, 2, 50, 3, 0])
    box = PartitionBox((1, 1), (2, 2))
    n_p, cells = 4, 1 + 2 + 3 + 0
    assert estimate_least_squares(box, h).value == pytest.approx((n_p * 9.0 + cells) / (n_p + 1))


def test_uniform_linear_in_counts(example_schema):
    y = np.array([51.0, 37.0, 53.0, 3.0])
    q = LinearQuery((0, 0), (1, 2))
    a = estimate_uniform(q, example_release(example_schema, tuple(y))).value
    b = estimate_uniform(q, example_release(example_schema, tuple(2.5 * y))).value
    assert b == pytest.approx(2.5 * a)


def test_uniform_unbiased_within_box(example_schema, example_x):
    boxes = tuple(EXAMPLE_BOXES)
    q = LinearQuery((1, 1), (1, 2))  # two cells inside the zero box
    box = boxes[3]
    src = NoiseSource(17)
    from dpcube.privacy import partitioned_noisy_counts

    vals = []
    for _ in range(10_000):
        counts = partitioned_noisy_counts(example_x, boxes, 0.15, BudgetLedger(0.15), src)
        h = ReleasedHistogram(example_schema, example_x, boxes, counts, 0.05, 0.15)
        vals.append(estimate_uniform(q, h).value)
    vals = np.array(vals)
    expected = q.s / box.n_p * example_x.box_sum(box)
    assert abs(vals.mean() - expected) <= 3 * vals.std() / np.sqrt(len(vals))


def test_subcube_methods_need_boxes(example_schema, example_x):
    h = ReleasedHistogram(example_schema, example_x)
    with pytest.raises(ValueError):
        estimate_uniform(LinearQuery((0, 0), (0, 0)), h)
    with pytest.raises(ValueError):
        estimate(LinearQuery((0, 0), (0, 0)), h, "nope")
