import numpy as np
import pytest

from dpcube.cube import AttributeDomain, CellVector, CubeSchema, PartitionBox

# Running example: 3x3 Income x Age cube, row-major with income as the row index.
EXAMPLE_X = [10, 21, 37, 20, 0, 0, 53, 0, 0]

# The four-box subcube partition drawn for the running example:
# cells {0,1}, {2}, {3,6}, {4,5,7,8}.
EXAMPLE_BOXES = [
    PartitionBox((0, 0), (0, 1)),
    PartitionBox((0, 2), (0, 2)),
    PartitionBox((1, 0), (2, 0)),
    PartitionBox((1, 1), (2, 2)),
]


@pytest.fixture
def example_schema():
    return CubeSchema(
        (
            AttributeDomain("income", (">30K", "20-30K", "<20K")),
            AttributeDomain("age", ("20-30", "30-40", "40-50")),
        )
    )


@pytest.fixture
def example_x(example_schema):
    return CellVector(example_schema, EXAMPLE_X)


@pytest.fixture
def example_records(example_schema):
    recs = []
    for idx, count in enumerate(EXAMPLE_X):
        i, j = example_schema.coord_of(idx)
        recs += [(example_schema.dims[0].bins[i], example_schema.dims[1].bins[j])] * count
    return recs


def random_counts(rng, shape, high=50):
    return rng.integers(0, high, size=shape).astype(float)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
