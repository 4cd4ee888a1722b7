"""Partitioned KRR strategies and the (lambda, sigma) grid search.

Eight strategies combine a partitioner with a predictor:

========  ===========  ==========
kind      partitioner  predictor
========  ===========  ==========
exact     whole        whole
dc        random       average
kk        kmeans       average
kk2       kmeans       nearest
kk3       kmeans       oracle
bk        kbalance     average
bk2       kbalance     nearest
bk3       kbalance     oracle
========  ===========  ==========

Each partition ``t`` of size ``m`` solves ``(K_t + lambda m I) alpha_t = y_t``.
The *nearest* predictor uses the model whose partition center is closest to
the test sample; the *oracle* predictor looks at the true regressand and picks
the model with the smallest squared error. The oracle is only usable for
evaluation, but it lower-bounds any per-sample model selection.

Partition index lists are kept in ascending row order, so a single partition
solves exactly the same system as the whole-set baseline.
"""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clustering import Clustering, kbalance, kmeans, nearest_centers
from .data import STREAM_PARTITION, Dataset, rng_for
from .kernel import KernelSpec, assemble_system, gram, median_pairwise_distance
from .runtime import CostModel, Counters, RunStats, dkrr_comm, estimate_time, run_partitions
from .solver import (
    KrrModel,
    NotPositiveDefinite,
    cholesky,
    prediction_flops,
    solve_spd,
    train_krr,
    training_flops,
)

CSV_COLUMNS = ("strategy", "p", "lambda", "sigma", "mse", "iter_seconds", "flops", "messages", "bytes", "failed")


class StrategyKind(enum.Enum):
    EXACT = "exact"
    DC = "dc"
    KK = "kk"
    KK2 = "kk2"
    KK3 = "kk3"
    BK = "bk"
    BK2 = "bk2"
    BK3 = "bk3"

    @classmethod
    def parse(cls, name) -> "StrategyKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {"dkrr": "exact", "dckrr": "dc", "kkrr": "kk", "kkrr2": "kk2", "kkrr3": "kk3",
                   "bkrr": "bk", "bkrr2": "bk2", "bkrr3": "bk3"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown strategy {name!r}") from None

    @property
    def partitioner(self) -> str:
        if self is StrategyKind.EXACT:
            return "whole"
        if self is StrategyKind.DC:
            return "random"
        return "kmeans" if self.value.startswith("kk") else "kbalance"

    @property
    def predictor(self) -> str:
        if self is StrategyKind.EXACT:
            return "whole"
        return {"2": "nearest", "3": "oracle"}.get(self.value[-1], "average")

    @property
    def label(self) -> str:
        if self is StrategyKind.EXACT:
            return "DKRR"
        if self is StrategyKind.DC:
            return "DC-KRR"
        return ("KKRR" if self.value.startswith("kk") else "BKRR") + self.value[2:]


class MissingCenters(ValueError):
    """Nearest-center prediction requested for a partition without centers."""


@dataclass(frozen=True, eq=False)
class PartitionSet:
    parts: tuple
    centers: np.ndarray | None = None
    clustering: Clustering | None = None

    @property
    def p(self) -> int:
        return len(self.parts)

    @property
    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.parts]


def partition(kind, train: Dataset, p: int, seed: int, threshold: float = 0.01, max_iters: int = 100) -> PartitionSet:
    """Split the training rows according to the strategy's partitioner."""
    kind = StrategyKind.parse(kind)
    n = train.n
    if kind.partitioner == "whole":
        return PartitionSet((np.arange(n),))
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n (p={p}, n={n})")
    if kind.partitioner == "random":
        perm = rng_for(seed, STREAM_PARTITION).permutation(n)
        return PartitionSet(tuple(np.sort(b) for b in np.array_split(perm, p)))
    if kind.partitioner == "kmeans":
        cl = kmeans(train, p, seed, threshold, max_iters)
    else:
        cl = kbalance(train, p, seed, threshold, max_iters)
    return PartitionSet(tuple(cl.parts()), cl.centers, cl)


def train_partitions(ps: PartitionSet, train: Dataset, spec: KernelSpec, lam: float, workers: int = 1) -> list[KrrModel]:
    """One independent KRR model per partition."""

    def make(t, idx):
        def task():
            if len(idx) == 0:
                raise ValueError(f"partition {t} is empty")
            center = None if ps.centers is None else ps.centers[t]
            sub = train.subset(idx)
            c = Counters()
            c.add(flops=training_flops(sub.n, train.d, spec.kind))
            return train_krr(sub, spec, lam, center=center), c
        return task

    models, stats = run_partitions([make(t, idx) for t, idx in enumerate(ps.parts)], workers)
    if stats.failures:
        t, err = min(stats.failures.items())
        if isinstance(err, NotPositiveDefinite):
            raise NotPositiveDefinite(err.pivot, err.value, partition=t) from err
        raise RuntimeError(f"partition {t} failed: {err!r}") from err
    return models


# ---------------------------------------------------------------------------
# predictors
# ---------------------------------------------------------------------------

def _batch(x):
    """Return (Dataset, single) for a sample or a batch."""
    if isinstance(x, Dataset):
        return x, False
    if isinstance(x, tuple):
        idx, val = (np.asarray(v) for v in x)
        d = int(idx.max()) + 1 if idx.size else 1
        return Dataset(d, [0, idx.size], idx, val, [0.0]), True
    v = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return Dataset.from_dense(v, [0.0]), True


def _aligned(X: Dataset, models) -> Dataset:
    d = models[0].support.d
    return X.with_dim(d) if X.d < d else X


def model_predictions(models: Sequence[KrrModel], X: Dataset) -> np.ndarray:
    """``(p, k)`` matrix of every model's prediction for every sample."""
    X = _aligned(X, models)
    return np.stack([m.predict(X) for m in models])


def predict_average(models, x):
    """Mean of the per-model predictions."""
    if not models:
        raise ValueError("need at least one model")
    X, single = _batch(x)
    P = model_predictions(models, X)
    out = P.sum(axis=0) / len(models)
    return float(out[0]) if single else out


def predict_nearest(models, centers, x):
    """Prediction of the model whose center is closest to the sample."""
    if centers is None:
        raise MissingCenters("nearest-center prediction needs partition centers")
    centers = np.asarray(centers, dtype=np.float64)
    X, single = _batch(x)
    X = _aligned(X, models)
    near = nearest_centers(centers, _fit_width(X.dense, centers.shape[1]))
    out = np.empty(X.n)
    for t in np.unique(near):
        rows = np.flatnonzero(near == t)
        out[rows] = models[t].predict(X.subset(rows))
    return float(out[0]) if single else out


def _fit_width(X, d):
    if X.shape[1] == d:
        return X
    Z = np.zeros((X.shape[0], d))
    w = min(d, X.shape[1])
    Z[:, :w] = X[:, :w]
    return Z


def oracle_select(P: np.ndarray, y_true) -> tuple[np.ndarray, np.ndarray]:
    """Per column of ``P``, the entry closest to ``y_true`` and its row."""
    y_true = np.asarray(y_true, dtype=np.float64)
    E = (P - y_true[None, :]) ** 2
    idx = E.argmin(axis=0)  # lowest index on ties
    return P[idx, np.arange(P.shape[1])], idx


def predict_oracle(models, x, y_true):
    """Per-sample best model given the true regressand: ``(prediction, index)``."""
    if not models:
        raise ValueError("need at least one model")
    X, single = _batch(x)
    P = model_predictions(models, X)
    pred, idx = oracle_select(P, np.atleast_1d(y_true))
    if single:
        return float(pred[0]), int(idx[0])
    return pred, idx


def mse(pred, truth) -> float:
    """Mean squared error ``(1/k) sum (pred - truth)^2``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions for {truth.size} targets")
    if pred.size == 0:
        raise ValueError("mse of an empty vector")
    diff = pred - truth
    return float(np.dot(diff, diff) / pred.size)


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def default_lambda_grid() -> list[float]:
    return [10.0 ** e for e in range(-6, 0)]


def default_sigma_grid(train: Dataset, seed: int) -> list[float]:
    """``g * 2**k`` for ``k = -4..4`` with ``g`` the median pairwise distance
    of a seeded 512-sample subsample."""
    g = median_pairwise_distance(train, seed)
    return [g * 2.0 ** k for k in range(-4, 5)]


@dataclass(eq=False)
class GridCell:
    lam: float
    sigma: float
    mse: float
    modeled_seconds: float
    measured_seconds: float
    flops: int
    messages: int
    bytes: int
    failed: bool = False
    residual: float = 0.0
    pred: np.ndarray | None = field(default=None, repr=False)

    def csv_row(self, strategy: str, p: int, timing: str = "modeled") -> list[str]:
        secs = self.modeled_seconds if timing == "modeled" else self.measured_seconds
        mse_s = "nan" if self.failed else f"{self.mse:.17g}"
        return [strategy, str(p), f"{self.lam:.17g}", f"{self.sigma:.17g}", mse_s, f"{secs:.17g}",
                str(self.flops), str(self.messages), str(self.bytes), "1" if self.failed else "0"]


@dataclass(eq=False)
class GridResult:
    kind: StrategyKind
    p: int
    cells: list[GridCell]
    sizes: list[int]
    runstats: list[RunStats] = field(default_factory=list)

    @property
    def trace(self) -> list[GridCell]:
        return [c for c in self.cells if not c.failed]

    @property
    def failed(self) -> list[GridCell]:
        return [c for c in self.cells if c.failed]

    @property
    def best(self) -> GridCell | None:
        best = None
        for c in self.trace:  # lambda-outer, sigma-inner order; first minimum wins
            if best is None or c.mse < best.mse:
                best = c
        return best

    @property
    def total_modeled_seconds(self) -> float:
        return sum(c.modeled_seconds for c in self.cells)

    @property
    def total_measured_seconds(self) -> float:
        return sum(c.measured_seconds for c in self.cells)

    def csv_rows(self, timing: str = "modeled") -> list[list[str]]:
        return [c.csv_row(self.kind.value, self.p, timing) for c in self.cells]

    def write_csv(self, path, timing: str = "modeled") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.csv_rows(timing))


def _cell_comm(kind: StrategyKind, k_test: int, n: int, p_machines: int) -> tuple[int, int]:
    """(messages, bytes) one partition sends in one grid iteration."""
    pred = kind.predictor
    if pred == "average":
        return 1, 8 * k_test  # reduce the prediction vector
    if pred == "nearest":
        return 1, 8  # reduce one scalar error
    if pred == "oracle":
        return k_test, 16 * k_test  # argmin (value, index) per test sample
    msgs, nb = dkrr_comm(n, p_machines)
    return msgs, msgs * nb


def grid_search_multi(kinds: Iterable, train: Dataset, test: Dataset, p: int,
                      lambdas: Sequence[float] | None = None, sigmas: Sequence[float] | None = None,
                      seed: int = 0, spec: KernelSpec | None = None, workers: int = 1,
                      cost: CostModel | None = None, partitions: PartitionSet | None = None,
                      keep_predictions: bool = False) -> dict[StrategyKind, GridResult]:
    """Grid search for several strategies that share one partitioner.

    The partitioning is computed once. For every sigma each partition builds
    its Gram matrix and test cross-kernel once, then factors and solves the
    shifted system for every lambda; every requested predictor is evaluated on
    the same models. Cells whose factorization fails are marked failed.
    """
    kinds = [StrategyKind.parse(k) for k in kinds]
    if not kinds:
        raise ValueError("no strategies given")
    if len({k.partitioner for k in kinds}) != 1:
        raise ValueError("strategies in one search must share a partitioner")
    spec = spec or KernelSpec()
    cost = cost or CostModel()
    lambdas = list(default_lambda_grid() if lambdas is None else lambdas)
    sigmas = list(default_sigma_grid(train, seed) if sigmas is None else sigmas)
    if not lambdas or not sigmas:
        raise ValueError("grids must be nonempty")
    if spec.kind != "gaussian":
        sigmas = sigmas[:1]
    if test.d != train.d:
        d = max(test.d, train.d)
        train, test = train.with_dim(d), test.with_dim(d)

    ps = partitions if partitions is not None else partition(kinds[0], train, p, seed)
    p_machines = max(p, 1)
    k = test.n
    preds_needed = {kd.predictor for kd in kinds}
    near = None
    if "nearest" in preds_needed:
        if ps.centers is None:
            raise MissingCenters(f"{kinds[0].value} partitions have no centers")
        near = nearest_centers(ps.centers, test)
    rows_for = []
    for t in range(ps.p):
        if preds_needed == {"nearest"}:
            rows_for.append(np.flatnonzero(near == t))
        else:
            rows_for.append(np.arange(k))
    subsets = [train.subset(ix) for ix in ps.parts]

    # results[si][t][li] = (pred_rows, residual, seconds) or None if failed
    results = []
    stats_all = []
    for sigma in sigmas:
        sp = spec.with_sigma(sigma)

        def make(t, sp=sp):
            def task():
                sub = subsets[t]
                t0 = time.perf_counter()
                K = gram(sp, sub)
                rows = rows_for[t]
                Kc = gram(sp, test.subset(rows), sub) if rows.size else np.zeros((0, sub.n))
                shared = (time.perf_counter() - t0) / len(lambdas)
                out = []
                for lam in lambdas:
                    t1 = time.perf_counter()
                    shift = lam * sub.n
                    try:
                        F = cholesky(assemble_system(K, lam, sub.n), overwrite=True)
                    except NotPositiveDefinite:
                        out.append(None)
                        continue
                    alpha = solve_spd(F, sub.y)
                    del F
                    # (K + shift I) alpha - y without keeping the assembled matrix
                    r = K @ alpha + shift * alpha - sub.y
                    ny = np.linalg.norm(sub.y)
                    res = float(np.linalg.norm(r) / ny) if ny > 0 else float(np.linalg.norm(r))
                    out.append((Kc @ alpha, res, shared + time.perf_counter() - t1))
                return out
            return task

        res, stats = run_partitions([make(t) for t in range(ps.p)], workers)
        if stats.failures:
            t, err = min(stats.failures.items())
            raise RuntimeError(f"partition {t} failed: {err!r}") from err
        results.append(res)
        stats_all.append(stats)

    n = train.n
    out: dict[StrategyKind, GridResult] = {}
    for kd in kinds:
        cells = []
        for li, lam in enumerate(lambdas):
            for si, sigma in enumerate(sigmas):
                per_t = [results[si][t][li] for t in range(ps.p)]
                cells.append(_score_cell(kd, lam, sigma, per_t, ps, subsets, rows_for, near, test,
                                         n, p_machines, spec.kind, cost, keep_predictions))
        out[kd] = GridResult(kd, p if kd is not StrategyKind.EXACT else p_machines, cells, ps.sizes, stats_all)
    return out


def _score_cell(kd, lam, sigma, per_t, ps, subsets, rows_for, near, test, n, p_machines, kernel_kind, cost, keep):
    k = test.n
    d = test.d
    P_t = [None if r is None else r[0] for r in per_t]
    failed = any(r is None for r in per_t)
    measured = 0.0 if failed else max(r[2] for r in per_t)
    residual = 0.0 if failed else max(r[1] for r in per_t)

    flops = messages = nbytes = 0
    crit = 0.0
    if kd.predictor == "whole":
        f = training_flops(n, d, kernel_kind) + prediction_flops(k, n, d, kernel_kind)
        msgs, vol = _cell_comm(kd, k, n, p_machines)
        flops, messages, nbytes = f, msgs * p_machines, vol * p_machines
        nb = vol // msgs if msgs else 0
        crit = estimate_time(cost, f / p_machines, msgs, nb)
    else:
        for t, sub in enumerate(subsets):
            k_t = int(np.count_nonzero(near == t)) if kd.predictor == "nearest" else k
            f = training_flops(sub.n, d, kernel_kind) + prediction_flops(k_t, sub.n, d, kernel_kind)
            msgs, vol = _cell_comm(kd, k, n, p_machines)
            flops += f
            messages += msgs
            nbytes += vol
            crit = max(crit, estimate_time(cost, f, msgs, vol // msgs if msgs else 0))

    if failed:
        return GridCell(lam, sigma, float("nan"), crit, measured, flops, messages, nbytes, True, residual)

    pred = _combine(kd, P_t, rows_for, near, test)
    return GridCell(lam, sigma, mse(pred, test.y), crit, measured, flops, messages, nbytes, False, residual,
                    pred if keep else None)


def _combine(kd, P_t, rows_for, near, test):
    k = test.n
    if kd.predictor == "whole":
        return P_t[0]
    if kd.predictor == "nearest":
        pred = np.empty(k)
        for t, rows in enumerate(rows_for):
            if rows.size == k:
                sel = np.flatnonzero(near == t)
                pred[sel] = P_t[t][sel]
            else:
                pred[rows] = P_t[t]
        return pred
    P = np.stack(P_t)
    if kd.predictor == "average":
        return P.sum(axis=0) / P.shape[0]
    return oracle_select(P, test.y)[0]


def grid_search(kind, train: Dataset, test: Dataset, p: int, lambdas=None, sigmas=None, seed: int = 0,
                **kwargs) -> GridResult:
    """Tune ``(lambda, sigma)`` for one strategy; see :func:`grid_search_multi`."""
    kind = StrategyKind.parse(kind)
    return grid_search_multi([kind], train, test, p, lambdas, sigmas, seed, **kwargs)[kind]


def run_strategies(kinds, train, test, p, lambdas=None, sigmas=None, seed=0, **kwargs) -> dict[StrategyKind, GridResult]:
    """Grid-search several strategies, sharing work between those with the
    same partitioner."""
    kinds = [StrategyKind.parse(k) for k in kinds]
    if sigmas is None:
        sigmas = default_sigma_grid(train, seed)
    groups: dict[str, list[StrategyKind]] = {}
    for kd in kinds:
        groups.setdefault(kd.partitioner, []).append(kd)
    found = {}
    for members in groups.values():
        found.update(grid_search_multi(members, train, test, p, lambdas, sigmas, seed, **kwargs))
    return {kd: found[kd] for kd in kinds}
