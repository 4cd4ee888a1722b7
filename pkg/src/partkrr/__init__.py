"""Partitioned kernel ridge regression."""

from ._backend import USE_NUMBA, backend_name
from .clustering import Clustering, kbalance, kmeans, nearest_center
from .data import Dataset, SplitSpec, load_libsvm, shuffle_split, standardize, synth_clustered, write_libsvm
from .kernel import KernelSpec, assemble_system, gram, kernel_eval
from .runtime import CostModel, estimate_time, run_partitions, theoretical_speedup, weak_scaling_report
from .solver import CholeskyFactor, KrrModel, NotPositiveDefinite, cholesky, solve_spd, train_krr
from .strategies import (
    GridResult,
    PartitionSet,
    StrategyKind,
    grid_search,
    mse,
    partition,
    predict_average,
    predict_nearest,
    predict_oracle,
    train_partitions,
)

__version__ = "0.1.0"
