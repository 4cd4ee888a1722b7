"""Hot numeric kernels, each in two flavours.

``*_loops`` functions are explicit loops compiled with numba; ``*_numpy``
functions are vectorised numpy equivalents used when numba is disabled.
Public wrappers at the bottom of the module dispatch on ``USE_NUMBA``.

Conventions shared by both flavours:

* sparse matrices are passed as CSR triples ``(indptr, indices, values)``
  with sorted, duplicate-free column indices per row;
* the Cholesky kernels factor ``A = U^T U`` in place on the *upper* triangle
  of a C-contiguous array, which is the lower factor stored column-major;
* kernel kinds are integer codes (see ``KIND_CODES``).
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import USE_NUMBA, njit

LINEAR, POLYNOMIAL, GAUSSIAN, SIGMOID = 0, 1, 2, 3
KIND_CODES = {"linear": LINEAR, "polynomial": POLYNOMIAL, "gaussian": GAUSSIAN, "sigmoid": SIGMOID}


# ---------------------------------------------------------------------------
# kernel matrices
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _sdot(ai, av, a0, a1, bi, bv, b0, b1):
    s = 0.0
    i = a0
    j = b0
    while i < a1 and j < b1:
        ci = ai[i]
        cj = bi[j]
        if ci == cj:
            s += av[i] * bv[j]
            i += 1
            j += 1
        elif ci < cj:
            i += 1
        else:
            j += 1
    return s


@njit(cache=True, nogil=True, inline="always")
def _phi(kind, dot, ni, nj, a, r, degree, sigma):
    if kind == GAUSSIAN:
        d2 = ni + nj - 2.0 * dot
        if d2 < 0.0:
            d2 = 0.0
        return math.exp(-d2 / (2.0 * sigma * sigma))
    if kind == LINEAR:
        return dot
    if kind == POLYNOMIAL:
        return math.pow(a * dot + r, float(degree))
    return math.tanh(a * dot + r)


@njit(cache=True, nogil=True)
def row_sq_norms_loops(indptr, indices, values):
    n = indptr.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        out[i] = _sdot(indices, values, s, e, indices, values, s, e)
    return out


@njit(cache=True, nogil=True)
def gram_sym_loops(indptr, indices, values, kind, a, r, degree, sigma):
    n = indptr.shape[0] - 1
    norms = row_sq_norms_loops(indptr, indices, values)
    G = np.empty((n, n))
    for i in range(n):
        si, ei = indptr[i], indptr[i + 1]
        for j in range(i, n):
            sj, ej = indptr[j], indptr[j + 1]
            dot = _sdot(indices, values, si, ei, indices, values, sj, ej)
            v = _phi(kind, dot, norms[i], norms[j], a, r, degree, sigma)
            G[i, j] = v
            G[j, i] = v
    return G


@njit(cache=True, nogil=True)
def gram_cross_loops(aptr, aind, aval, bptr, bind, bval, kind, a, r, degree, sigma):
    na = aptr.shape[0] - 1
    nb = bptr.shape[0] - 1
    norms_a = row_sq_norms_loops(aptr, aind, aval)
    norms_b = row_sq_norms_loops(bptr, bind, bval)
    G = np.empty((na, nb))
    for i in range(na):
        si, ei = aptr[i], aptr[i + 1]
        for j in range(nb):
            dot = _sdot(aind, aval, si, ei, bind, bval, bptr[j], bptr[j + 1])
            G[i, j] = _phi(kind, dot, norms_a[i], norms_b[j], a, r, degree, sigma)
    return G


def _densify(indptr, indices, values, d):
    n = indptr.shape[0] - 1
    X = np.zeros((n, d))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    X[rows, indices] = values
    return X


def _phi_numpy(kind, dots, na, nb, a, r, degree, sigma):
    if kind == GAUSSIAN:
        d2 = na[:, None] + nb[None, :] - 2.0 * dots
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / (2.0 * sigma * sigma))
    if kind == LINEAR:
        return dots
    if kind == POLYNOMIAL:
        return np.power(a * dots + r, float(degree))
    return np.tanh(a * dots + r)


def gram_sym_numpy(indptr, indices, values, kind, a, r, degree, sigma):
    d = int(indices.max()) + 1 if indices.size else 1
    X = _densify(indptr, indices, values, d)
    norms = np.einsum("ij,ij->i", X, X)
    dots = X @ X.T
    np.fill_diagonal(dots, norms)  # BLAS may round <x, x> differently from the cached norm
    G = _phi_numpy(kind, dots, norms, norms, a, r, degree, sigma)
    # mirror the upper triangle so the result is exactly symmetric
    U = np.triu(G)
    return U + np.triu(U, 1).T


def gram_cross_numpy(aptr, aind, aval, bptr, bind, bval, kind, a, r, degree, sigma):
    d = 1 + max(int(aind.max()) if aind.size else 0, int(bind.max()) if bind.size else 0)
    A = _densify(aptr, aind, aval, d)
    B = _densify(bptr, bind, bval, d)
    na = np.einsum("ij,ij->i", A, A)
    nb = np.einsum("ij,ij->i", B, B)
    return _phi_numpy(kind, A @ B.T, na, nb, a, r, degree, sigma)


# ---------------------------------------------------------------------------
# Cholesky and triangular solves (upper storage, A = U^T U)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def chol_upper_loops(U):
    """Right-looking unblocked factorization; returns -1 or the failing pivot."""
    m = U.shape[0]
    for k in range(m):
        piv = U[k, k]
        if not piv > 0.0:
            return k
        dkk = math.sqrt(piv)
        U[k, k] = dkk
        for j in range(k + 1, m):
            U[k, j] /= dkk
        for i in range(k + 1, m):
            uki = U[k, i]
            for j in range(i, m):
                U[i, j] -= uki * U[k, j]
    return -1


def chol_upper_numpy(U):
    m = U.shape[0]
    for k in range(m):
        piv = U[k, k]
        if not piv > 0.0:
            return k
        dkk = math.sqrt(piv)
        U[k, k] = dkk
        row = U[k, k + 1:]
        row /= dkk
        U[k + 1:, k + 1:] -= np.outer(row, row)
    return -1


@njit(cache=True, nogil=True)
def solve_upper_t_loops(U, y):
    # U^T z = y, column-oriented so U is read row-wise
    m = U.shape[0]
    z = y.copy()
    for i in range(m):
        z[i] /= U[i, i]
        zi = z[i]
        for j in range(i + 1, m):
            z[j] -= zi * U[i, j]
    return z


@njit(cache=True, nogil=True)
def solve_upper_loops(U, z):
    m = U.shape[0]
    x = z.copy()
    for i in range(m - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, m):
            s -= U[i, j] * x[j]
        x[i] = s / U[i, i]
    return x


def solve_upper_t_numpy(U, y):
    m = U.shape[0]
    z = np.array(y, dtype=float)
    for i in range(m):
        z[i] /= U[i, i]
        z[i + 1:] -= z[i] * U[i, i + 1:]
    return z


def solve_upper_numpy(U, z):
    m = U.shape[0]
    x = np.array(z, dtype=float)
    for i in range(m - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def assign_nearest_loops(X, C):
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bj = 0
        bd = np.inf
        for j in range(k):
            s = 0.0
            for f in range(d):
                t = X[i, f] - C[j, f]
                s += t * t
            if s < bd:
                bd = s
                bj = j
        labels[i] = bj
        best[i] = bd
    return labels, best


def assign_nearest_numpy(X, C, chunk=4096):
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for s in range(0, n, chunk):
        diff = X[s:s + chunk, None, :] - C[None, :, :]
        D = np.einsum("ikf,ikf->ik", diff, diff)
        lab = D.argmin(axis=1)  # first minimum == lowest index on ties
        labels[s:s + chunk] = lab
        best[s:s + chunk] = D[np.arange(D.shape[0]), lab]
    return labels, best


@njit(cache=True, nogil=True)
def balanced_scan_loops(X, C, base, n_large):
    """Greedy capacity-limited nearest-center scan in row order.

    Every cluster may hold ``base`` samples; at most ``n_large`` of them may
    grow to ``base + 1``.
    """
    n, d = X.shape
    k = C.shape[0]
    sizes = np.zeros(k, dtype=np.int64)
    member = np.empty(n, dtype=np.int64)
    large = 0
    for i in range(n):
        mind = np.inf
        minind = -1
        for j in range(k):
            cs = sizes[j]
            if not (cs < base or (cs == base and large < n_large)):
                continue
            s = 0.0
            for f in range(d):
                t = X[i, f] - C[j, f]
                s += t * t
            if s < mind:
                mind = s
                minind = j
        if sizes[minind] == base:
            large += 1
        sizes[minind] += 1
        member[i] = minind
    return member, sizes


def balanced_scan_numpy(X, C, base, n_large):
    n = X.shape[0]
    k = C.shape[0]
    diff = X[:, None, :] - C[None, :, :]
    D = np.einsum("ikf,ikf->ik", diff, diff)
    sizes = np.zeros(k, dtype=np.int64)
    member = np.empty(n, dtype=np.int64)
    large = 0
    for i in range(n):
        open_ = (sizes < base) | ((sizes == base) & (large < n_large))
        j = int(np.where(open_, D[i], np.inf).argmin())
        if not open_[j]:
            # every open center at +inf distance; take the first open one
            j = int(np.flatnonzero(open_)[0])
        if sizes[j] == base:
            large += 1
        sizes[j] += 1
        member[i] = j
    return member, sizes


if USE_NUMBA:
    gram_sym = gram_sym_loops
    gram_cross = gram_cross_loops
    chol_upper = chol_upper_loops
    solve_upper_t = solve_upper_t_loops
    solve_upper = solve_upper_loops
    assign_nearest = assign_nearest_loops
    balanced_scan = balanced_scan_loops
else:
    gram_sym = gram_sym_numpy
    gram_cross = gram_cross_numpy
    chol_upper = chol_upper_numpy
    solve_upper_t = solve_upper_t_numpy
    solve_upper = solve_upper_numpy
    assign_nearest = assign_nearest_numpy
    balanced_scan = balanced_scan_numpy
