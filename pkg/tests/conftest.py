from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from partkrr.data import SplitSpec, shuffle_split, standardize, synth_clustered

# first calls into compiled kernels pay a JIT cost, so no per-example deadline
settings.register_profile("partkrr", deadline=None, max_examples=40)
settings.load_profile("partkrr")


@pytest.fixture(scope="session")
def small_problem():
    full = synth_clustered(360, 4, 4, 0.1, 5)
    train, test = shuffle_split(full, SplitSpec(5, 0.25))
    train, test, _ = standardize(train, test)
    return train, test


def two_blobs(n_a, n_b, gap=50.0, spread=1.0, seed=0, d=2):
    """Two Gaussian blobs; returns (X, labels) with blob A first."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, spread, size=(n_a, d))
    b = rng.normal(0.0, spread, size=(n_b, d))
    b[:, 0] += gap
    return np.vstack([a, b]), np.r_[np.zeros(n_a, int), np.ones(n_b, int)]


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
