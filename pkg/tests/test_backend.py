"""Numba loop kernels and numpy fallbacks must agree."""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from partkrr import _kernels as kn
from partkrr._backend import NUMBA_AVAILABLE
from partkrr.data import Dataset

mats = hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
                  elements=st.floats(-4, 4, allow_nan=False, allow_infinity=False))
kinds = st.sampled_from([kn.LINEAR, kn.POLYNOMIAL, kn.GAUSSIAN, kn.SIGMOID])


@given(mats, kinds)
def test_gram_parity(X, kind):
    ds = Dataset.from_dense(X, np.zeros(X.shape[0]))
    args = (ds.indptr, ds.indices, ds.values, kind, 0.4, 0.3, 2, 1.2)
    a, b = kn.gram_sym_loops(*args), kn.gram_sym_numpy(*args)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    cross = (ds.indptr, ds.indices, ds.values, ds.indptr, ds.indices, ds.values, kind, 0.4, 0.3, 2, 1.2)
    assert np.allclose(kn.gram_cross_loops(*cross), kn.gram_cross_numpy(*cross), rtol=1e-12, atol=1e-12)


@given(st.integers(1, 40), st.integers(0, 10**6))
def test_cholesky_and_solve_parity(m, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, m))
    A = G @ G.T + m * np.eye(m)
    Ua, Ub = A.copy(), A.copy()
    assert kn.chol_upper_loops(Ua) == kn.chol_upper_numpy(Ub) == -1
    Ua, Ub = np.triu(Ua), np.triu(Ub)
    assert np.allclose(Ua, Ub, rtol=1e-12, atol=1e-12)
    y = rng.normal(size=m)
    za, zb = kn.solve_upper_t_loops(Ua, y), kn.solve_upper_t_numpy(Ua, y)
    assert np.allclose(za, zb, rtol=1e-10, atol=1e-12)
    assert np.allclose(kn.solve_upper_loops(Ua, za), kn.solve_upper_numpy(Ua, za), rtol=1e-10, atol=1e-12)


def test_failing_pivot_parity():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    assert kn.chol_upper_loops(A.copy()) == kn.chol_upper_numpy(A.copy()) == 1


@given(mats, st.integers(1, 5), st.integers(0, 1000))
def test_assignment_parity(X, k, seed):
    rng = np.random.default_rng(seed)
    C = np.ascontiguousarray(X[rng.integers(0, X.shape[0], size=k)])
    la, da = kn.assign_nearest_loops(X, C)
    lb, db = kn.assign_nearest_numpy(X, C)
    assert np.allclose(da, db, atol=1e-9)
    # labels agree except where two centers are within rounding of each other
    D = ((X[:, None, :] - C[None]) ** 2).sum(-1)
    gap = np.sort(D, axis=1)[:, 1] - np.sort(D, axis=1)[:, 0] if k > 1 else np.full(X.shape[0], np.inf)
    assert np.all((la == lb) | (gap < 1e-9))
    n = X.shape[0]
    base, extra = divmod(n, k)
    ma, sa = kn.balanced_scan_loops(X, C, base, extra)
    mb, sb = kn.balanced_scan_numpy(X, C, base, extra)
    if np.all(gap >= 1e-9):
        assert np.array_equal(ma, mb) and np.array_equal(sa, sb)
    assert sorted(np.asarray(sa).tolist()) == sorted(np.asarray(sb).tolist())


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, PARTKRR_DISABLE_NUMBA="1")
    code = "import partkrr; print(partkrr.backend_name())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
