"""Command-line front end.

Subcommands::

    partkrr run            grid-search strategies on a dataset, write CSV reports
    partkrr weak-scaling   modeled (and optionally measured) weak-scaling table
    partkrr cluster-stats  K-means vs K-balance cluster sizes
    partkrr synth          write a synthetic clustered dataset in sparse text format

Settings can come from a flat ``key = value`` file given with ``--config``;
command-line flags override it. Exit status is 0 on success, 1 for usage or
configuration errors and 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .clustering import kbalance, kmeans
from .data import Dataset, SplitSpec, load_libsvm, load_libsvm_pair, shuffle_split, standardize, synth_clustered, write_libsvm
from .datasets import load_named
from .kernel import KernelSpec
from .runtime import CostModel, estimate_time, imbalance_time_ratio, weak_scaling_report
from .solver import prediction_flops, training_flops
from .strategies import (
    StrategyKind,
    default_lambda_grid,
    default_sigma_grid,
    grid_search,
    partition,
    run_strategies,
)

log = logging.getLogger("partkrr")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
WEAK_SCALING_HEADER = ("p", "n", "modeled_seconds", "measured_seconds", "efficiency")
SUMMARY_HEADER = ("strategy", "p", "best_lambda", "best_sigma", "best_mse", "total_seconds", "failed_cells")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merge(args, defaults: dict):
    """Fill options the user did not pass from the config file, then defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, value in cfg.items():
        if not hasattr(args, key):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        vals = [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("empty grid")
    return vals


def _ints(text) -> list[int]:
    return [int(v) for v in _floats(text)]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _strategies(text) -> list[StrategyKind]:
    names = text if isinstance(text, list) else [text]
    out = []
    for chunk in names:
        for name in str(chunk).split(","):
            if name.strip():
                try:
                    out.append(StrategyKind.parse(name))
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
    if not out:
        raise UsageError("no strategy given")
    return list(dict.fromkeys(out))


def _load_data(args) -> tuple[Dataset, Dataset, str]:
    seed = int(args.seed)
    sources = [s for s in (args.dataset, args.synthetic, args.named) if s]
    if len(sources) != 1:
        raise UsageError("give exactly one of --dataset, --synthetic, --named")
    if args.named:
        nd = load_named(args.named, seed)
        train, test, source = nd.train, nd.test, nd.source
    elif args.synthetic:
        try:
            n, d, c, noise = str(args.synthetic).split(",")
            full = synth_clustered(int(n), int(d), int(c), float(noise), seed)
        except ValueError as exc:
            raise UsageError(f"--synthetic expects n,d,c,noise: {exc}") from None
        train, test = shuffle_split(full, SplitSpec(seed, float(args.test_fraction)))
        source = f"synthetic:{args.synthetic}"
    else:
        for path in (args.dataset, args.test_dataset):
            if path and not Path(path).is_file():
                raise UsageError(f"no such file: {path}")
        if args.test_dataset:
            train, test = load_libsvm_pair(args.dataset, args.test_dataset)
        else:
            train, test = shuffle_split(load_libsvm(args.dataset), SplitSpec(seed, float(args.test_fraction)))
        source = f"file:{args.dataset}"
    if _bool(args.standardize):
        train, test, _ = standardize(train, test)
    return train, test, source


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_DATA_DEFAULTS = dict(seed="0", test_fraction="0.2", standardize="true", workers="1")


def cmd_run(args) -> int:
    args = _merge(args, dict(_DATA_DEFAULTS, strategy=["bk2"], p="8", lambda_grid=None, sigma_grid="auto",
                             out="partkrr-out", timing="modeled", kernel="gaussian"))
    kinds = _strategies(args.strategy)
    p = int(args.p)
    if p < 1:
        raise UsageError("p must be >= 1")
    train, test, source = _load_data(args)
    seed = int(args.seed)
    lambdas = default_lambda_grid() if args.lambda_grid in (None, "auto") else _floats(args.lambda_grid)
    sigmas = default_sigma_grid(train, seed) if str(args.sigma_grid) == "auto" else _floats(args.sigma_grid)
    if args.timing not in ("modeled", "measured"):
        raise UsageError("--timing must be modeled or measured")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = KernelSpec(kind=args.kernel)
    cost = CostModel()

    log.info("data %s: %d train, %d test, d=%d", source, train.n, test.n, train.d)
    t0 = time.perf_counter()
    results = run_strategies(kinds, train, test, p, lambdas, sigmas, seed, spec=spec, workers=int(args.workers), cost=cost)
    elapsed = time.perf_counter() - t0

    summary, runstats, timings, curve = [], [], [], []
    for kd, res in results.items():
        res.write_csv(out / f"grid_{kd.value}.csv", args.timing)
        best = res.best
        total = res.total_modeled_seconds if args.timing == "modeled" else res.total_measured_seconds
        summary.append([kd.value, str(res.p),
                        "" if best is None else _fmt(best.lam), "" if best is None else _fmt(best.sigma),
                        "nan" if best is None else _fmt(best.mse), _fmt(total), str(len(res.failed))])
        for t, m in enumerate(res.sizes):
            f = training_flops(m, train.d, spec.kind) + prediction_flops(test.n, m, train.d, spec.kind)
            runstats.append([kd.value, str(res.p), str(t), str(m), str(f), _fmt(estimate_time(cost, f))])
        for si, st in enumerate(res.runstats):
            for t, w in enumerate(st.wall):
                timings.append([kd.value, str(res.p), _fmt(sigmas[si]), str(t), f"{w:.6f}"])
        cum, best_so_far = 0.0, float("inf")
        for it, c in enumerate(res.cells, start=1):
            cum += c.modeled_seconds if args.timing == "modeled" else c.measured_seconds
            if not c.failed:
                best_so_far = min(best_so_far, c.mse)
            curve.append([kd.value, str(res.p), str(it), _fmt(c.lam), _fmt(c.sigma), _fmt(cum),
                          "nan" if c.failed else _fmt(c.mse), _fmt(best_so_far)])

    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    _write_csv(out / "runstats.csv", ("strategy", "p", "partition", "size", "flops_per_iter", "modeled_seconds_per_iter"), runstats)
    _write_csv(out / "curve.csv", ("strategy", "p", "iteration", "lambda", "sigma", "cumulative_seconds", "mse", "best_mse"), curve)
    # wall-clock measurements vary run to run; kept apart from the reproducible reports
    _write_csv(out / "timings.csv", ("strategy", "p", "sigma", "partition", "wall_seconds"), timings)

    print(f"# data {source}: train={train.n} test={test.n} d={train.d}  ({elapsed:.1f}s)")
    print(f"{'strategy':<8} {'p':>3} {'best_mse':>14} {'lambda':>10} {'sigma':>10} {'failed':>6}")
    for row in summary:
        print(f"{row[0]:<8} {row[1]:>3} {float(row[4]):>14.6g} {row[2] and float(row[2]):>10.3g} "
              f"{row[3] and float(row[3]):>10.4g} {row[6]:>6}")
    return EXIT_OK


def measure_iteration(kind, m: int, p: int, seed: int, workers: int, repeats: int = 5, d: int = 8) -> tuple[float, list[int]]:
    """Median per-iteration critical-path wall time for ``p`` partitions of about ``m`` samples."""
    kind = StrategyKind.parse(kind)
    n_test = max(64, m // 4)
    full = synth_clustered(m * p + n_test, d, max(p, 2), 0.1, seed)
    train, test = shuffle_split(full, SplitSpec(seed, n_test / full.n))
    train, test, _ = standardize(train, test)
    ps = partition(kind, train, p, seed)
    sigma = default_sigma_grid(train, seed)[4]
    # warm-up compiles kernels and fills caches
    grid_search(kind, train, test, p, [1e-3], [sigma], seed, workers=workers, partitions=ps)
    times = []
    for _ in range(repeats):
        res = grid_search(kind, train, test, p, [1e-3], [sigma], seed, workers=workers, partitions=ps)
        times.append(res.cells[0].measured_seconds)
    return statistics.median(times), ps.sizes


def cmd_weak_scaling(args) -> int:
    args = _merge(args, dict(strategy="bk2", m="256", p_list="1,2,4,8", seed="0", workers=None, measure="true",
                             out="partkrr-out", repeats="5"))
    kinds = _strategies(args.strategy)
    if len(kinds) != 1:
        raise UsageError("weak-scaling takes one strategy")
    kind = kinds[0]
    ps = _ints(args.p_list)
    if any(b != a * 2 for a, b in zip(ps, ps[1:])):
        raise UsageError("--p-list must double at every step, e.g. 1,2,4,8")
    m = int(args.m)
    measured = None
    max_parts = None
    if _bool(args.measure):
        measured, max_parts = [], []
        for p in ps:
            workers = p if args.workers is None else int(args.workers)
            t, sizes = measure_iteration(kind, m, p, int(args.seed), workers, int(args.repeats))
            measured.append(t)
            max_parts.append(max(sizes))
        if kind.partitioner == "whole":
            max_parts = None
    strategy = "exact" if kind is StrategyKind.EXACT else "partitioned"
    rows = weak_scaling_report(strategy, ps[0], m * ps[0], len(ps), measured=measured,
                               max_parts=None if kind.partitioner != "kmeans" else max_parts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"weak_scaling_{kind.value}.csv"
    _write_csv(path, WEAK_SCALING_HEADER,
               [[str(r.p), str(r.n), _fmt(r.modeled_seconds), "" if r.measured_seconds is None else _fmt(r.measured_seconds),
                 _fmt(r.efficiency)] for r in rows])
    print(",".join(WEAK_SCALING_HEADER))
    for r in rows:
        meas = "" if r.measured_seconds is None else f"{r.measured_seconds:.6f}"
        print(f"{r.p},{r.n},{r.modeled_seconds:.6g},{meas},{r.efficiency:.6g}")
    return EXIT_OK


def cmd_cluster_stats(args) -> int:
    args = _merge(args, dict(_DATA_DEFAULTS, k="8", method="both", standardize="false", test_fraction="0.2"))
    k = int(args.k)
    if args.method not in ("kmeans", "kbalance", "both"):
        raise UsageError("--method must be kmeans, kbalance or both")
    if args.dataset and not args.test_dataset:
        if not Path(args.dataset).is_file():
            raise UsageError(f"no such file: {args.dataset}")
        ds = load_libsvm(args.dataset)
        if _bool(args.standardize):
            ds = standardize(ds)[0]
    elif args.synthetic:
        n, d, c, noise = str(args.synthetic).split(",")
        ds = synth_clustered(int(n), int(d), int(c), float(noise), int(args.seed))
        if _bool(args.standardize):
            ds = standardize(ds)[0]
    else:
        ds = _load_data(args)[0]
    methods = ["kmeans", "kbalance"] if args.method == "both" else [args.method]
    rows = []
    km = kmeans(ds, k, int(args.seed))
    for method in methods:
        cl = km if method == "kmeans" else kbalance(ds, k, int(args.seed), warm=km)
        sizes = [int(s) for s in cl.sizes]
        ratio = max(sizes) / min(sizes)
        rows.append([method, str(k), " ".join(map(str, sizes)), str(max(sizes) - min(sizes)), f"{ratio:.6g}",
                     f"{imbalance_time_ratio(sizes):.6g}"])
        print(f"{method:<9} sizes={sizes} max-min={max(sizes) - min(sizes)} max/min={ratio:.4g} "
              f"modeled time ratio={imbalance_time_ratio(sizes):.4g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "cluster_stats.csv", ("method", "k", "sizes", "max_minus_min", "size_ratio", "modeled_time_ratio"), rows)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        n, d, c, noise = args.synthetic.split(",")
        ds = synth_clustered(int(n), int(d), int(c), float(noise), int(args.seed))
    except ValueError as exc:
        raise UsageError(f"--synthetic expects n,d,c,noise: {exc}") from None
    write_libsvm(ds, args.output)
    print(f"wrote {ds.n} samples (d={ds.d}) to {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _data_flags(sp):
    sp.add_argument("--config", help="key = value settings file")
    sp.add_argument("--dataset", help="sparse text file (1-based idx:val)")
    sp.add_argument("--test-dataset", help="separate test file; otherwise --dataset is split")
    sp.add_argument("--synthetic", metavar="N,D,C,NOISE", help="generate clustered synthetic data")
    sp.add_argument("--named", help="mg, space_ga or cadata (file from $PARTKRR_DATA_DIR or a stand-in)")
    sp.add_argument("--test-fraction", type=float)
    sp.add_argument("--standardize", help="z-score features (true/false, default true for run)")
    sp.add_argument("--no-standardize", dest="standardize", action="store_const", const="false")
    sp.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="partkrr", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="grid-search strategies and write CSV reports")
    _data_flags(run)
    run.add_argument("--strategy", action="append", help="comma list: exact,dc,kk,kk2,kk3,bk,bk2,bk3")
    run.add_argument("--p", type=int, help="number of partitions / machines")
    run.add_argument("--lambda-grid", help="comma list or auto")
    run.add_argument("--sigma-grid", help="comma list or auto")
    run.add_argument("--kernel", choices=("gaussian", "linear", "polynomial", "sigmoid"))
    run.add_argument("--workers", type=int)
    run.add_argument("--timing", choices=("modeled", "measured"), help="iter_seconds column source")
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    ws = sub.add_parser("weak-scaling", help="weak-scaling report")
    ws.add_argument("--config")
    ws.add_argument("--strategy", action="append")
    ws.add_argument("--m", type=int, help="samples per partition")
    ws.add_argument("--p-list", help="doubling sequence, e.g. 1,2,4,8")
    ws.add_argument("--seed", type=int)
    ws.add_argument("--workers", type=int, help="worker threads (default: p)")
    ws.add_argument("--measure", help="also time real iterations (true/false)")
    ws.add_argument("--repeats", type=int)
    ws.add_argument("--out")
    ws.set_defaults(func=cmd_weak_scaling)

    cs = sub.add_parser("cluster-stats", help="cluster sizes for kmeans vs kbalance")
    _data_flags(cs)
    cs.add_argument("--k", type=int)
    cs.add_argument("--method")
    cs.add_argument("--out")
    cs.set_defaults(func=cmd_cluster_stats)

    sy = sub.add_parser("synth", help="write a synthetic dataset")
    sy.add_argument("--synthetic", required=True, metavar="N,D,C,NOISE")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--output", required=True)
    sy.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"partkrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"partkrr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
