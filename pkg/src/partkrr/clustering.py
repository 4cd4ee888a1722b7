"""K-means and K-balance partitioning of training samples.

K-balance warm-starts from K-means and then scans the samples in row order,
putting each one into the nearest center that still has room. With
``n = q k + r`` every center may take ``q`` samples and ``r`` of them may take
one more, so the final sizes are exactly ``q`` or ``q + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import STREAM_INIT, Dataset, rng_for

DEFAULT_THRESHOLD = 0.01
DEFAULT_MAX_ITERS = 100


@dataclass(frozen=True, eq=False)
class Clustering:
    centers: np.ndarray
    membership: np.ndarray
    sizes: np.ndarray
    n_iter: int = 0
    wcss_trace: tuple = field(default=())

    def __post_init__(self):
        k = self.centers.shape[0]
        if self.membership.size and (self.membership.min() < 0 or self.membership.max() >= k):
            raise ValueError("membership index out of range")
        if not np.array_equal(np.bincount(self.membership, minlength=k), self.sizes):
            raise ValueError("sizes disagree with membership")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    def parts(self) -> list[np.ndarray]:
        """Sample indices of every cluster, ascending."""
        order = np.argsort(self.membership, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def to_text(self) -> str:
        k, d = self.centers.shape
        lines = [f"{k} {d} {self.n}"]
        lines += [" ".join(f"{v:.17g}" for v in row) for row in self.centers]
        lines += [str(int(j)) for j in self.membership]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Clustering":
        lines = text.strip().splitlines()
        k, d, n = (int(t) for t in lines[0].split())
        if len(lines) != 1 + k + n:
            raise ValueError("clustering text has the wrong number of lines")
        centers = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + k]]).reshape(k, d)
        membership = np.array([int(t) for t in lines[1 + k:]], dtype=np.int64)
        return cls(centers, membership, np.bincount(membership, minlength=k))


def _as_dense(X) -> np.ndarray:
    if isinstance(X, Dataset):
        return np.ascontiguousarray(X.dense)
    return np.ascontiguousarray(X, dtype=np.float64)


def _means(X, labels, k):
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)  # fixed-order accumulation
    counts = np.bincount(labels, minlength=k)
    return sums / np.maximum(counts, 1)[:, None], counts


def _fill_empty(X, labels, dist2, centers, counts):
    """Move the sample farthest from its own center into each empty cluster."""
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return False
    dist2 = dist2.copy()
    for j in empty:
        donors = counts[labels] > 1
        cand = np.where(donors, dist2, -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        centers[j] = X[i]
        dist2[i] = 0.0
    return True


def _wcss(X, labels, centers) -> float:
    diff = X - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans(X, k: int, seed: int, threshold: float = DEFAULT_THRESHOLD, max_iters: int = DEFAULT_MAX_ITERS) -> Clustering:
    """Lloyd's algorithm with a changed-fraction stopping rule.

    Centers start at ``k`` distinct samples drawn with the seeded generator
    and every sample is assigned to its nearest one. Each iteration moves the
    centers to their cluster means, reassigns samples and counts the number
    ``delta`` whose cluster changed; iteration stops once
    ``delta / n <= threshold`` or after ``max_iters`` iterations. An emptied
    cluster is re-seeded with the sample farthest from its current center.
    The returned centers are the means of the returned membership.
    """
    X = _as_dense(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n (k={k}, n={n})")
    rng = rng_for(seed, STREAM_INIT)
    centers = X[np.sort(rng.choice(n, size=k, replace=False))].copy()
    labels, dist2 = _kernels.assign_nearest(X, centers)
    counts = np.bincount(labels, minlength=k)
    _fill_empty(X, labels, dist2, centers, counts)
    trace = [_wcss(X, labels, centers)]
    it = 0
    while it < max_iters:
        it += 1
        centers, counts = _means(X, labels, k)
        new, dist2 = _kernels.assign_nearest(X, centers)
        counts = np.bincount(new, minlength=k)
        reseeded = _fill_empty(X, new, dist2, centers, counts)
        delta = int(np.count_nonzero(new != labels))
        labels = new
        trace.append(_wcss(X, labels, centers))
        if delta / n <= threshold and not reseeded:
            break
    centers, counts = _means(X, labels, k)
    return Clustering(centers, labels, counts, it, tuple(trace))


def kbalance(X, k: int, seed: int, threshold: float = DEFAULT_THRESHOLD, max_iters: int = DEFAULT_MAX_ITERS,
             recompute_centers: bool = True, warm: Clustering | None = None) -> Clustering:
    """Equal-size clustering seeded by :func:`kmeans`.

    Samples are scanned in row order; each goes to its nearest center that is
    still open. A center is open while it holds fewer than ``n // k`` samples,
    or exactly ``n // k`` while fewer than ``n % k`` centers have grown to
    ``n // k + 1``. Centers are then recomputed as the means of their members
    unless ``recompute_centers`` is False. ``warm`` supplies a precomputed
    K-means result.
    """
    X = _as_dense(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n (k={k}, n={n})")
    km = warm if warm is not None else kmeans(X, k, seed, threshold, max_iters)
    base, n_large = divmod(n, k)
    member, sizes = _kernels.balanced_scan(X, np.ascontiguousarray(km.centers), base, n_large)
    member = np.asarray(member, dtype=np.int64)
    centers = _means(X, member, k)[0] if recompute_centers else km.centers.copy()
    return Clustering(centers, member, np.asarray(sizes, dtype=np.int64), km.n_iter, km.wcss_trace)


def nearest_center(C, x) -> int:
    """Index of the center closest to ``x``; ties go to the lowest index."""
    centers = C.centers if isinstance(C, Clustering) else np.asarray(C, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(1, -1)
    labels, _ = _kernels.assign_nearest(x, np.ascontiguousarray(centers))
    return int(labels[0])


def nearest_centers(C, X) -> np.ndarray:
    centers = C.centers if isinstance(C, Clustering) else np.asarray(C, dtype=np.float64)
    labels, _ = _kernels.assign_nearest(_as_dense(X), np.ascontiguousarray(centers))
    return np.asarray(labels, dtype=np.int64)
