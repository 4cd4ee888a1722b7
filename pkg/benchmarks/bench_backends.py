"""Compare the numba loop kernels with the pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_backends.py [--m 1024] [--repeats 5]``.
Both implementations are always importable, so one process times both. The
end-to-end line at the bottom runs one full grid iteration through the public
API with whichever backend ``PARTKRR_DISABLE_NUMBA`` selected.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from partkrr import _kernels as kn
from partkrr._backend import NUMBA_AVAILABLE, backend_name
from partkrr.data import SplitSpec, shuffle_split, standardize, synth_clustered
from partkrr.kernel import KernelSpec, assemble_system, gram
from partkrr.solver import cholesky
from partkrr.strategies import grid_search


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def cases(m, d, seed):
    ds = synth_clustered(m, d, 8, 0.1, seed)
    ptr, ind, val = ds.indptr, ds.indices, ds.values
    g = (kn.GAUSSIAN, 1.0, 0.0, 2, 1.5)
    K = gram(KernelSpec(sigma=1.5), ds)
    A = assemble_system(K, 1e-3, m)
    X = np.ascontiguousarray(ds.dense)
    C = np.ascontiguousarray(X[:8].copy())
    base, extra = divmod(m, 8)
    return {
        "gram_sym": (lambda: kn.gram_sym_loops(ptr, ind, val, *g), lambda: kn.gram_sym_numpy(ptr, ind, val, *g)),
        "chol_upper": (lambda: kn.chol_upper_loops(A.copy()), lambda: kn.chol_upper_numpy(A.copy())),
        "assign_nearest": (lambda: kn.assign_nearest_loops(X, C), lambda: kn.assign_nearest_numpy(X, C)),
        "balanced_scan": (lambda: kn.balanced_scan_loops(X, C, base, extra),
                          lambda: kn.balanced_scan_numpy(X, C, base, extra)),
        "blocked_cholesky": (None, lambda: cholesky(A)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--m", type=int, default=1024)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"numba available: {NUMBA_AVAILABLE}; active backend: {backend_name()}; m={args.m} d={args.d}")
    print(f"{'kernel':<18} {'numba best (s)':>15} {'numpy best (s)':>15} {'speedup':>8}")
    for name, (fast, slow) in cases(args.m, args.d, args.seed).items():
        if fast is not None and NUMBA_AVAILABLE:
            fast()  # compile
            tf = best_of(fast, args.repeats)[0]
        else:
            tf = float("nan")
        ts = best_of(slow, args.repeats)[0]
        print(f"{name:<18} {tf:>15.5f} {ts:>15.5f} {ts / tf:>8.2f}")

    full = synth_clustered(4 * args.m + 256, args.d, 8, 0.1, args.seed)
    train, test = shuffle_split(full, SplitSpec(args.seed, 256 / full.n))
    train, test, _ = standardize(train, test)
    grid_search("bk2", train, test, 4, [1e-3], [1.0], args.seed)  # warm-up
    t0 = time.perf_counter()
    grid_search("bk2", train, test, 4, [1e-3], [1.0], args.seed)
    print(f"end-to-end bk2 p=4 one grid cell ({backend_name()}): {time.perf_counter() - t0:.3f}s")


if __name__ == "__main__":
    main()
