"""Differentially private multidimensional histograms via cell and kd-tree partitioning."""

from .cube import (
    AttributeDomain,
    CellVector,
    CubeSchema,
    LinearQuery,
    PartitionBox,
    QueryMatrix,
    cells_in_box,
    evaluate_query,
    ingest,
)
from .estimate import Estimate, estimate, estimate_cell_only, estimate_least_squares, estimate_uniform, ls_solve_partition
from .partition import (
    KdParams,
    ReleasedHistogram,
    kd_partition,
    kd_tree,
    query_matrix_of,
    release_cell,
    release_cell_histogram,
    release_dpcube,
)
from .privacy import BudgetExceeded, BudgetLedger, NoiseSource, laplace_sample, noisy_count, partitioned_noisy_counts

__version__ = "0.1.0"
