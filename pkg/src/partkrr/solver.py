"""Cholesky factorization, SPD solves and per-partition KRR models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels
from .data import Dataset
from .kernel import KernelSpec, assemble_system, gram

BLOCK = 256
_UPDATE_ROWS = 1024


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A non-positive pivot was met during factorization."""

    def __init__(self, pivot: int, value: float | None = None, partition: int | None = None):
        self.pivot = pivot
        self.value = value
        self.partition = partition
        where = f" in partition {partition}" if partition is not None else ""
        super().__init__(f"matrix is not positive definite{where}: pivot {pivot} = {value!r}")


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """``A = L L^T``. The upper factor ``U = L^T`` is what is stored."""

    U: np.ndarray

    @property
    def L(self) -> np.ndarray:
        return self.U.T

    @property
    def m(self) -> int:
        return self.U.shape[0]


def cholesky(A, block: int = BLOCK, overwrite: bool = False) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix.

    Right-looking factorization by column blocks of width ``block``: the
    diagonal block goes through the unblocked kernel, the panel through a
    triangular solve and the trailing matrix gets a rank-``block`` update.
    With ``block >= m`` this is the plain unblocked algorithm. Only the upper
    triangle of ``A`` is read. ``overwrite=True`` reuses a C-contiguous
    float64 ``A`` as the factor storage instead of copying it.

    Raises
    ------
    NotPositiveDefinite
        On the first pivot that is not strictly positive.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if overwrite and A.flags.c_contiguous and A.flags.writeable:
        U = A
    else:
        U = np.array(A, order="C", copy=True)
    m = U.shape[0]
    for k0 in range(0, m, block):
        k1 = min(k0 + block, m)
        diag = np.ascontiguousarray(U[k0:k1, k0:k1])
        info = _kernels.chol_upper(diag)
        if info >= 0:
            raise NotPositiveDefinite(k0 + info, float(diag[info, info]))
        U[k0:k1, k0:k1] = diag
        if k1 == m:
            break
        U11 = np.triu(diag)
        panel = solve_triangular(U11, U[k0:k1, k1:], trans="T", lower=False, check_finite=False)
        U[k0:k1, k1:] = panel
        for r0 in range(k1, m, _UPDATE_ROWS):
            r1 = min(r0 + _UPDATE_ROWS, m)
            # upper part of the trailing rows [r0, r1)
            U[r0:r1, r0:] -= panel[:, r0 - k1:r1 - k1].T @ panel[:, r0 - k1:]
    for r0 in range(0, m, _UPDATE_ROWS):
        r1 = min(r0 + _UPDATE_ROWS, m)
        U[r0:r1, :r1] = np.triu(U[r0:r1, :r1], k=r0)
    return CholeskyFactor(U)


def solve_spd(F: CholeskyFactor, y) -> np.ndarray:
    """Solve ``L L^T alpha = y`` by forward then backward substitution."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (F.m,):
        raise ValueError(f"right-hand side has shape {y.shape}, expected ({F.m},)")
    z = _kernels.solve_upper_t(F.U, y)
    return _kernels.solve_upper(F.U, z)


def relative_residual(A, alpha, y) -> float:
    ny = np.linalg.norm(y)
    r = np.linalg.norm(A @ alpha - y)
    return float(r / ny) if ny > 0 else float(r)


@dataclass(frozen=True, eq=False)
class KrrModel:
    """A trained KRR model: support samples, coefficients and kernel."""

    support: Dataset
    alpha: np.ndarray
    spec: KernelSpec
    lam: float
    center: np.ndarray | None = None
    residual: float = 0.0

    def __post_init__(self):
        if self.alpha.shape != (self.support.n,):
            raise ValueError("alpha must have one coefficient per support sample")

    def predict(self, X: Dataset) -> np.ndarray:
        return gram(self.spec, X, self.support) @ self.alpha


def train_krr(X: Dataset, spec: KernelSpec, lam: float, y=None, center=None, K=None) -> KrrModel:
    """Fit ``alpha`` from ``(K + lam * m * I) alpha = y``.

    ``y`` defaults to ``X.y``; a precomputed Gram matrix may be passed as ``K``.
    """
    y = X.y if y is None else np.asarray(y, dtype=np.float64)
    if y.shape != (X.n,):
        raise ValueError("need one regressand per sample")
    K = gram(spec, X) if K is None else K
    A = assemble_system(K, lam, X.n)
    alpha = solve_spd(cholesky(A), y)
    return KrrModel(X, alpha, spec, lam, center, relative_residual(A, alpha, y))


# ---------------------------------------------------------------------------
# operation counts
# ---------------------------------------------------------------------------

def cholesky_flops(m: int) -> int:
    """Exact count for the unblocked algorithm: m sqrt, m(m-1)/2 divides and
    sum_j j(j+1) multiply-subtract pairs in the trailing updates."""
    return m + m * (m - 1) // 2 + (m - 1) * m * (m + 1) // 3


def triangular_solve_flops(m: int) -> int:
    return m * m


def kernel_eval_flops(d: int, kind: str = "gaussian") -> int:
    # 2d for the inner product over dense-equivalent rows, plus the scalar map
    return 2 * d + {"linear": 0, "polynomial": 3, "gaussian": 5, "sigmoid": 3}[kind]


def training_flops(m: int, d: int, kind: str = "gaussian", include_gram: bool = True) -> int:
    """Gram (symmetric half) + diagonal shift + factorization + two solves."""
    g = m * (m + 1) // 2 * kernel_eval_flops(d, kind) if include_gram else 0
    return g + m + cholesky_flops(m) + 2 * triangular_solve_flops(m)


def prediction_flops(k: int, m: int, d: int, kind: str = "gaussian") -> int:
    return k * m * (kernel_eval_flops(d, kind) + 2)
