from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import two_blobs
from hypothesis import given, settings
from hypothesis import strategies as st

from partkrr.data import Dataset, SplitSpec, shuffle_split, standardize, synth_clustered
from partkrr.kernel import KernelSpec
from partkrr.solver import train_krr, training_flops
from partkrr.strategies import (
    MissingCenters,
    StrategyKind,
    grid_search,
    grid_search_multi,
    model_predictions,
    mse,
    oracle_select,
    partition,
    predict_average,
    predict_nearest,
    predict_oracle,
    run_strategies,
    train_partitions,
)

ALL = list(StrategyKind)
SPEC = KernelSpec(sigma=1.0)


def test_parse_and_labels():
    assert StrategyKind.parse("BKRR2") is StrategyKind.BK2
    assert StrategyKind.parse("dkrr") is StrategyKind.EXACT
    assert StrategyKind.KK3.label == "KKRR3" and StrategyKind.DC.label == "DC-KRR"
    with pytest.raises(ValueError):
        StrategyKind.parse("zz")


def test_exact_is_one_part(small_problem):
    train, _ = small_problem
    ps = partition("exact", train, 8, 0)
    assert ps.p == 1 and ps.sizes == [train.n]


def test_dc_even_split():
    ds = Dataset.from_dense(np.arange(8.0).reshape(-1, 1), np.zeros(8))
    assert partition("dc", ds, 4, 0).sizes == [2, 2, 2, 2]


def test_kk_allows_imbalance():
    X, _ = two_blobs(90, 30, gap=40.0, seed=2)
    ds = Dataset.from_dense(X, np.zeros(120))
    assert sorted(partition("kk", ds, 2, 0).sizes) == [30, 90]
    assert partition("bk", ds, 2, 0).sizes == [60, 60]


@given(st.sampled_from(ALL[1:]), st.integers(1, 6), st.integers(0, 50))
@settings(max_examples=25)
def test_partitions_cover_rows(kind, p, seed):
    ds = synth_clustered(40, 2, 3, 0.0, seed)
    ps = partition(kind, ds, p, seed)
    rows = np.concatenate(ps.parts)
    assert sorted(rows.tolist()) == list(range(40))
    assert all(np.all(np.diff(ix) > 0) for ix in ps.parts)


def test_p1_model_equals_whole(small_problem):
    train, _ = small_problem
    (m,) = train_partitions(partition("dc", train, 1, 0), train, SPEC, 1e-3)
    ref = train_krr(train, SPEC, 1e-3)
    assert np.array_equal(m.alpha, ref.alpha)


def test_models_are_independent(small_problem):
    train, _ = small_problem
    ps = partition("dc", train, 3, 0)
    models = train_partitions(ps, train, SPEC, 1e-3)
    rev = type(ps)(ps.parts[::-1])
    models_rev = train_partitions(rev, train, SPEC, 1e-3)
    for a, b in zip(models, models_rev[::-1]):
        assert np.array_equal(a.alpha, b.alpha)


def test_worker_count_does_not_change_models(small_problem):
    train, _ = small_problem
    ps = partition("bk", train, 4, 0)
    a = train_partitions(ps, train, SPEC, 1e-3, workers=1)
    b = train_partitions(ps, train, SPEC, 1e-3, workers=4)
    assert all(np.array_equal(x.alpha, y.alpha) for x, y in zip(a, b))


def test_kbalance_flops_equal_across_partitions(small_problem):
    train, _ = small_problem
    ps = partition("bk", train, 7, 0)
    flops = {training_flops(s, train.d) for s in ps.sizes}
    lo, hi = min(ps.sizes), max(ps.sizes)
    assert flops <= {training_flops(lo, train.d), training_flops(hi, train.d)}


def test_average_arithmetic():
    class Const:
        def __init__(self, v):
            self.v = v
            self.support = Dataset.from_dense([[0.0]], [0.0])

        def predict(self, X):
            return np.full(X.n, self.v)

    assert predict_average([Const(3.0), Const(5.0)], [0.0]) == 4.0
    assert predict_oracle([Const(3.0), Const(5.0)], [0.0], 4.9) == (5.0, 1)
    assert predict_oracle([Const(3.0)], [0.0], 100.0) == (3.0, 0)


def test_average_matches_explicit_kernel_sum(small_problem):
    train, test = small_problem
    ps = partition("dc", train, 3, 0)
    models = train_partitions(ps, train, SPEC, 1e-2)
    got = predict_average(models, test)
    X, Xt = train.dense, test.dense
    ref = np.zeros(test.n)
    for model, ix in zip(models, ps.parts):
        for a, i in zip(model.alpha, ix):
            ref += a * np.exp(-np.sum((Xt - X[i]) ** 2, axis=1) / 2.0)
    ref /= 3
    assert np.allclose(got, ref, atol=1e-10)


def test_p1_predictors_equal_whole(small_problem):
    train, test = small_problem
    whole = train_krr(train, SPEC, 1e-2).predict(test)
    for kind in ("kk", "bk"):
        ps = partition(kind, train, 1, 0)
        models = train_partitions(ps, train, SPEC, 1e-2)
        assert np.array_equal(predict_average(models, test), whole)
        assert np.array_equal(predict_nearest(models, ps.centers, test), whole)
        assert np.array_equal(predict_oracle(models, test, test.y)[0], whole)


def test_nearest_uses_own_cluster_model():
    X, _ = two_blobs(30, 30, gap=100.0, seed=4)
    y = np.r_[np.ones(30), -np.ones(30)]
    ds = Dataset.from_dense(X, y)
    ps = partition("kk2", ds, 2, 0)
    models = train_partitions(ps, ds, SPEC, 1e-3)
    x = X[45]
    t = int(np.flatnonzero([45 in ix for ix in ps.parts])[0])
    assert predict_nearest(models, ps.centers, x) == models[t].predict(Dataset.from_dense([x], [0.0]))[0]


def test_nearest_tie_goes_to_lower_index():
    ds = Dataset.from_dense([[0.0], [10.0]], [1.0, 2.0])
    m0 = train_krr(ds.subset([0]), SPEC, 1.0)
    m1 = train_krr(ds.subset([1]), SPEC, 1.0)
    got = predict_nearest([m0, m1], np.array([[0.0], [10.0]]), [5.0])
    assert got == m0.predict(Dataset.from_dense([[5.0]], [0.0]))[0]


def test_nearest_needs_centers(small_problem):
    train, test = small_problem
    models = train_partitions(partition("dc", train, 2, 0), train, SPEC, 1e-2)
    with pytest.raises(MissingCenters):
        predict_nearest(models, None, test)


def test_oracle_dominates_nearest_per_sample(small_problem):
    train, test = small_problem
    ps = partition("bk", train, 4, 0)
    models = train_partitions(ps, train, SPEC, 1e-2)
    near = predict_nearest(models, ps.centers, test)
    orc, _ = predict_oracle(models, test, test.y)
    assert np.all((orc - test.y) ** 2 <= (near - test.y) ** 2)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(-1e3, 1e3))
def test_oracle_select_is_min(preds, y):
    P = np.array(preds).reshape(-1, 1)
    val, idx = oracle_select(P, [y])
    errs = [(v - y) ** 2 for v in preds]
    assert (val[0] - y) ** 2 == min(errs)
    assert idx[0] == errs.index(min(errs))


def test_mse_examples():
    assert mse([1, 2], [1, 2]) == 0.0
    assert mse([1, 3], [0, 0]) == 5.0
    assert mse([2], [5]) == 9.0
    with pytest.raises(ValueError):
        mse([1, 2], [1])


def test_single_cell_grid(small_problem):
    train, test = small_problem
    res = grid_search("bk2", train, test, 3, [1e-2], [1.0], 0)
    assert len(res.trace) == 1 and res.best is res.cells[0]


def test_exact_and_dc_p1_traces_match(small_problem):
    train, test = small_problem
    a = grid_search("exact", train, test, 1, [1e-4, 1e-2], [0.5, 2.0], 0)
    b = grid_search("dc", train, test, 1, [1e-4, 1e-2], [0.5, 2.0], 0)
    assert [c.mse for c in a.cells] == pytest.approx([c.mse for c in b.cells], abs=1e-10)


def test_oracle_bound_in_grid(small_problem):
    train, test = small_problem
    res = run_strategies(["kk2", "kk3", "bk2", "bk3"], train, test, 4, [1e-4, 1e-2], [0.5, 1.0], 0)
    for two, three in (("kk2", "kk3"), ("bk2", "bk3")):
        r2, r3 = res[StrategyKind(two)], res[StrategyKind(three)]
        assert all(c3.mse <= c2.mse for c2, c3 in zip(r2.cells, r3.cells))
        assert r3.best.mse <= r2.best.mse


def test_best_is_first_minimum_in_lambda_outer_order(small_problem):
    train, test = small_problem
    res = grid_search("dc", train, test, 2, [1e-3, 1e-3], [1.0], 0)
    assert res.cells[0].mse == res.cells[1].mse
    assert res.best is res.cells[0]
    assert [(c.lam, c.sigma) for c in grid_search("dc", train, test, 2, [1, 2], [3, 4], 0).cells] == \
        [(1, 3), (1, 4), (2, 3), (2, 4)]


def test_failed_cells_do_not_abort(small_problem):
    train, test = small_problem
    spec = KernelSpec("sigmoid", a=-3.0, r=-2.0)
    res = grid_search("dc", train, test, 2, [1e-9, 10.0], [1.0], 0, spec=spec)
    assert res.failed and all(math.isnan(c.mse) for c in res.failed)
    assert res.best is None or not res.best.failed


def test_exact_invariant_to_row_order(small_problem):
    train, test = small_problem
    perm = np.random.default_rng(0).permutation(train.n)
    a = grid_search("exact", train, test, 1, [1e-3], [1.0], 0).cells[0].mse
    b = grid_search("exact", train.subset(perm), test, 1, [1e-3], [1.0], 0).cells[0].mse
    assert abs(a - b) < 1e-10


def test_grid_deterministic_and_worker_independent(small_problem):
    train, test = small_problem
    a = grid_search_multi(["bk", "bk2", "bk3"], train, test, 4, [1e-3, 1e-1], [0.7, 1.4], 0, workers=1)
    b = grid_search_multi(["bk", "bk2", "bk3"], train, test, 4, [1e-3, 1e-1], [0.7, 1.4], 0, workers=4)
    for kd in a:
        assert a[kd].csv_rows() == b[kd].csv_rows()


def test_mixed_partitioners_rejected(small_problem):
    train, test = small_problem
    with pytest.raises(ValueError):
        grid_search_multi(["bk2", "kk2"], train, test, 2, [1e-2], [1.0], 0)


def test_message_counts(small_problem):
    train, test = small_problem
    k = test.n
    res = run_strategies(["dc", "bk2", "bk3"], train, test, 4, [1e-2], [1.0], 0)
    dc, bk2, bk3 = (res[StrategyKind(s)].cells[0] for s in ("dc", "bk2", "bk3"))
    assert (dc.messages, dc.bytes) == (4, 4 * 8 * k)
    assert (bk2.messages, bk2.bytes) == (4, 4 * 8)
    assert (bk3.messages, bk3.bytes) == (4 * k, 4 * 16 * k)


def test_model_predictions_shape(small_problem):
    train, test = small_problem
    models = train_partitions(partition("dc", train, 3, 0), train, SPEC, 1e-2)
    assert model_predictions(models, test).shape == (3, test.n)


def test_dimension_mismatch_between_train_and_test():
    full = synth_clustered(80, 3, 2, 0.1, 0)
    train, test = shuffle_split(full, SplitSpec(0, 0.25))
    train, test, _ = standardize(train, test)
    res = grid_search("bk2", train, test.with_dim(5), 2, [1e-2], [1.0], 0)
    assert not res.cells[0].failed
