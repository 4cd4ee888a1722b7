"""Kernel functions, Gram matrices and the shifted KRR system."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .data import Dataset

KINDS = ("linear", "polynomial", "gaussian", "sigmoid")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice and parameters.

    ``a`` and ``r`` are the scale and offset of the polynomial and sigmoid
    kernels, ``degree`` is the polynomial exponent and ``sigma`` the Gaussian
    bandwidth. Fields a kind does not use are ignored.
    """

    kind: str = "gaussian"
    a: float = 1.0
    r: float = 0.0
    degree: int = 2
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian kernel needs sigma > 0")
        if self.kind == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError("polynomial degree must be a positive integer")

    def with_sigma(self, sigma: float) -> "KernelSpec":
        return replace(self, sigma=float(sigma))

    def _args(self):
        return (_kernels.KIND_CODES[self.kind], float(self.a), float(self.r), int(self.degree), float(self.sigma))


def _as_sparse(x):
    """Accept ``(indices, values)`` or a dense 1-d vector."""
    if isinstance(x, tuple):
        idx, val = x
        return np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    idx = np.flatnonzero(x)
    return idx, x[idx]


def _sparse_dot(ai, av, bi, bv) -> float:
    # sorted-index merge; accumulation order matches the compiled kernel
    s = 0.0
    i = j = 0
    while i < len(ai) and j < len(bi):
        if ai[i] == bi[j]:
            s += float(av[i]) * float(bv[j])
            i += 1
            j += 1
        elif ai[i] < bi[j]:
            i += 1
        else:
            j += 1
    return s


def kernel_eval(spec: KernelSpec, x_i, x_j) -> float:
    """Evaluate the kernel on two sparse vectors without densifying them."""
    ai, av = _as_sparse(x_i)
    bi, bv = _as_sparse(x_j)
    dot = _sparse_dot(ai, av, bi, bv)
    if spec.kind == "gaussian":
        d2 = _sparse_dot(ai, av, ai, av) + _sparse_dot(bi, bv, bi, bv) - 2.0 * dot
        if d2 < 0.0:
            d2 = 0.0
        return math.exp(-d2 / (2.0 * spec.sigma * spec.sigma))
    if spec.kind == "linear":
        return dot
    if spec.kind == "polynomial":
        return math.pow(spec.a * dot + spec.r, float(spec.degree))
    return math.tanh(spec.a * dot + spec.r)


def gram(spec: KernelSpec, A: Dataset, B: Dataset | None = None) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``.

    With ``B`` omitted (or the same object as ``A``) each unordered pair is
    evaluated once and mirrored, so the result is exactly symmetric.
    """
    if B is None or B is A:
        return _kernels.gram_sym(A.indptr, A.indices, A.values, *spec._args())
    if A.d != B.d:
        raise ValueError(f"dimension mismatch: {A.d} vs {B.d}")
    return _kernels.gram_cross(A.indptr, A.indices, A.values, B.indptr, B.indices, B.values, *spec._args())


def assemble_system(K: np.ndarray, lam: float, m: int | None = None) -> np.ndarray:
    """Return ``K + lam * m * I`` as a new array (``m`` defaults to the order of K)."""
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("K must be square")
    m = K.shape[0] if m is None else m
    A = np.array(K, dtype=np.float64, order="C", copy=True)
    A[np.diag_indices_from(A)] += lam * m
    return A


def median_pairwise_distance(ds: Dataset, seed: int, sample: int = 512) -> float:
    """Median Euclidean distance between distinct rows of a seeded subsample."""
    from .data import STREAM_GRID, rng_for

    n = ds.n
    idx = np.arange(n) if n <= sample else np.sort(rng_for(seed, STREAM_GRID).choice(n, sample, replace=False))
    X = ds.dense[idx]
    sq = np.einsum("ij,ij->i", X, X)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    iu = np.triu_indices(len(idx), 1)
    if len(iu[0]) == 0:
        return 1.0
    g = float(np.median(np.sqrt(D2[iu])))
    return g if g > 0 else 1.0
