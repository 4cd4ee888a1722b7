"""Sparse regression datasets: loading, writing, splitting, scaling, synthesis.

Rows are held in CSR layout (``indptr``, ``indices``, ``values``) with
0-based, strictly increasing column indices per row. On disk the usual
``<label> <idx>:<val> ...`` text format is used with 1-based indices.

All randomness goes through ``numpy.random.Generator`` backed by PCG64,
seeded from ``numpy.random.SeedSequence``; streams are therefore stable
across platforms and numpy versions that keep PCG64's output fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

# Sub-stream ids for deriving independent generators from one config seed.
STREAM_SPLIT = 0
STREAM_INIT = 1
STREAM_PARTITION = 2
STREAM_GRID = 3
STREAM_SYNTH = 4


class DatasetFormatError(ValueError):
    """Malformed sparse text input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for ``(seed, stream)``; distinct streams are independent."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` samples of dimension ``d`` in CSR layout plus regressands ``y``."""

    d: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "y", y)
        n = indptr.shape[0] - 1
        if n < 1 or self.d < 1:
            raise ValueError(f"dataset needs n >= 1 and d >= 1 (n={n}, d={self.d})")
        if y.shape != (n,):
            raise ValueError(f"y has {y.shape[0]} entries for {n} rows")
        if indptr[0] != 0 or indptr[-1] != indices.shape[0] or np.any(np.diff(indptr) < 0):
            raise ValueError("inconsistent indptr")
        if indices.shape != values.shape:
            raise ValueError("indices and values differ in length")
        if indices.size:
            if indices.min() < 0 or indices.max() >= self.d:
                raise ValueError(f"feature index outside [0, {self.d})")
            step = np.diff(indices)
            row_start = np.zeros(indices.shape[0], dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("row indices must be strictly increasing")

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.values[s:e]

    @cached_property
    def dense(self) -> np.ndarray:
        X = np.zeros((self.n, self.d))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        X[rows, self.indices] = self.values
        X.flags.writeable = False
        return X

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        starts = self.indptr[idx]
        lens = self.indptr[idx + 1] - starts
        indptr = np.concatenate([[0], np.cumsum(lens)])
        gather = np.repeat(starts - indptr[:-1], lens) + np.arange(indptr[-1])
        return Dataset(self.d, indptr, self.indices[gather], self.values[gather], self.y[idx])

    def with_dim(self, d: int) -> "Dataset":
        if d < self.d:
            raise ValueError("cannot shrink feature dimension")
        return Dataset(d, self.indptr, self.indices, self.values, self.y)

    @classmethod
    def from_dense(cls, X, y) -> "Dataset":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        rows, cols = np.nonzero(X)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=X.shape[0]))])
        return cls(X.shape[1], indptr, cols, X[rows, cols], np.asarray(y, dtype=np.float64))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    test_fraction: float

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")

    def test_count(self, n: int) -> int:
        k = int(math.floor(n * self.test_fraction + 0.5))
        if k < 1 or k > n - 1:
            raise ValueError(f"test_fraction={self.test_fraction} leaves an empty side for n={n}")
        return k


def load_libsvm(path, n_features: int | None = None) -> Dataset:
    """Parse a ``<label> <idx>:<val> ...`` file (1-based indices).

    ``d`` is the largest index seen, or ``n_features`` if that is larger
    (useful for aligning a test file with its training file). Blank lines and
    ``#`` comments are ignored; entries within a line may appear in any order
    but may not repeat.
    """
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise DatasetFormatError(f"bad label {tokens[0]!r}", lineno) from None
            entries = []
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DatasetFormatError(f"expected idx:val, got {tok!r}", lineno)
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise DatasetFormatError(f"bad entry {tok!r}", lineno) from None
                if idx < 1:
                    raise DatasetFormatError(f"feature index {idx} is not 1-based", lineno)
                entries.append((idx - 1, val))
            entries.sort()
            for (a, _), (b, _) in zip(entries, entries[1:]):
                if a == b:
                    raise DatasetFormatError(f"duplicate feature index {a + 1}", lineno)
            if entries:
                max_idx = max(max_idx, entries[-1][0] + 1)
            labels.append(label)
            indices.extend(i for i, _ in entries)
            values.extend(v for _, v in entries)
            indptr.append(len(indices))
    if not labels:
        raise DatasetFormatError(f"{path}: no samples")
    d = max(max_idx, n_features or 0, 1)
    return Dataset(d, np.array(indptr), np.array(indices, dtype=np.int64), np.array(values), np.array(labels))


def write_libsvm(ds: Dataset, path) -> None:
    """Write ``ds`` with 17 significant digits so reloading is exact."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(ds.n):
            idx, val = ds.row(i)
            parts = [f"{ds.y[i]:.17g}"]
            parts.extend(f"{j + 1}:{v:.17g}" for j, v in zip(idx, val))
            fh.write(" ".join(parts) + "\n")


def load_libsvm_pair(train_path, test_path) -> tuple[Dataset, Dataset]:
    train = load_libsvm(train_path)
    test = load_libsvm(test_path, n_features=train.d)
    if test.d > train.d:
        train = train.with_dim(test.d)
    return train, test


def shuffle_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    perm = split_permutation(ds.n, spec.seed)
    k = spec.test_count(ds.n)
    return ds.subset(np.sort(perm[k:])), ds.subset(np.sort(perm[:k]))


def split_permutation(n: int, seed: int) -> np.ndarray:
    """The permutation used by :func:`shuffle_split`; test rows are its head."""
    return rng_for(seed, STREAM_SPLIT).permutation(n)


@dataclass(frozen=True)
class ScaleStats:
    mean: np.ndarray
    std: np.ndarray


def _scale(ds: Dataset, stats: ScaleStats) -> Dataset:
    live = stats.std > 0
    Z = np.where(live, (ds.dense - stats.mean) / np.where(live, stats.std, 1.0), 0.0)
    return Dataset.from_dense(Z, ds.y)


def standardize(train: Dataset, test: Dataset | None = None):
    """Z-score features with the training mean and population std.

    Zero-variance features become 0 in both sets. Returns
    ``(train', test', stats)``; ``test'`` is None when ``test`` is.
    """
    if test is not None and test.d != train.d:
        d = max(train.d, test.d)
        train, test = train.with_dim(d), test.with_dim(d)
    X = train.dense
    stats = ScaleStats(X.mean(axis=0), X.std(axis=0))
    return _scale(train, stats), (None if test is None else _scale(test, stats)), stats


def concat(a: Dataset, b: Dataset) -> Dataset:
    d = max(a.d, b.d)
    return Dataset(
        d,
        np.concatenate([a.indptr, b.indptr[1:] + a.nnz]),
        np.concatenate([a.indices, b.indices]),
        np.concatenate([a.values, b.values]),
        np.concatenate([a.y, b.y]),
    )


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticTruth:
    labels: np.ndarray
    centers: np.ndarray
    offsets: np.ndarray
    slopes: np.ndarray


def synth_clustered_with_truth(n: int, d: int, c: int, noise: float, seed: int,
                               spread: float = 1.0, separation: float = 8.0):
    """Clustered regression data plus the generating labels and centers.

    Centers are placed by rejection sampling so every pair is at least
    ``separation`` apart (the sampling box grows if placement stalls).
    Sample ``i`` in cluster ``j`` is ``center_j + spread * N(0, I)`` and its
    regressand is ``sin(|x - center_j|) + b_j + w_j . (x - center_j)`` plus
    ``noise * N(0, 1)``.
    """
    if not n >= c >= 1:
        raise ValueError("need n >= c >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = rng_for(seed, STREAM_SYNTH)
    half = separation * max(1.0, c ** (1.0 / d))
    centers = np.empty((c, d))
    placed = 0
    attempts = 0
    while placed < c:
        cand = rng.uniform(-half, half, size=d)
        if placed == 0 or np.min(np.linalg.norm(centers[:placed] - cand, axis=1)) >= separation:
            centers[placed] = cand
            placed += 1
            attempts = 0
        else:
            attempts += 1
            if attempts > 1000:
                half *= 1.5
                attempts = 0
    offsets = rng.uniform(-3.0, 3.0, size=c)
    slopes = rng.normal(0.0, 0.5, size=(c, d))
    labels = rng.integers(0, c, size=n)
    X = centers[labels] + spread * rng.standard_normal((n, d))
    local = X - centers[labels]
    y = np.sin(np.linalg.norm(local, axis=1)) + offsets[labels] + np.einsum("ij,ij->i", local, slopes[labels])
    if noise > 0:
        y = y + noise * rng.standard_normal(n)
    return Dataset.from_dense(X, y), SyntheticTruth(labels, centers, offsets, slopes)


def synth_clustered(n: int, d: int, c: int, noise: float, seed: int) -> Dataset:
    return synth_clustered_with_truth(n, d, c, noise, seed)[0]
