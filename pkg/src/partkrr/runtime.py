"""Partition execution, operation counters and the alpha-beta-gamma cost model.

``run_partitions`` is the only place that owns a worker pool. Each task
returns its value together with a :class:`Counters` record; counters are merged
after the pool joins, in task order, so totals never depend on scheduling.

The analytic side models one parallel step as ``f*gamma + n_m*(alpha +
n_b*beta)`` per machine and the weak-scaling behaviour of the exact
distributed solver (``n^3/p`` flops per machine) versus independent
partitions (``(n/p)^3`` per machine).
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

log = logging.getLogger(__name__)

# Default message latency, per-byte time and per-flop time (seconds).
DEFAULT_ALPHA = 7.2e-6
DEFAULT_BETA = 0.9e-9
DEFAULT_GAMMA = 2e-11

# Bytes each machine moves per distributed-Cholesky step, in units of 8 n^2 / sqrt(p).
DKRR_VOLUME_CONSTANT = 1.0


@dataclass(frozen=True)
class CostModel:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.alpha >= self.beta >= self.gamma >= 0:
            raise ValueError("cost model needs alpha >= beta >= gamma >= 0")

    def time(self, f: float, n_m: float = 0, n_b: float = 0) -> float:
        return estimate_time(self, f, n_m, n_b)


def estimate_time(model: CostModel, f: float, n_m: float = 0, n_b: float = 0) -> float:
    """Seconds for ``f`` flops plus ``n_m`` messages of ``n_b`` bytes each."""
    if f < 0 or n_m < 0 or n_b < 0:
        raise ValueError("counts must be nonnegative")
    return f * model.gamma + n_m * (model.alpha + n_b * model.beta)


def _exact_time(model: CostModel, f, n_m=0, n_b=0) -> Fraction:
    g, a, b = (Fraction(v) for v in (model.gamma, model.alpha, model.beta))
    return Fraction(f) * g + Fraction(n_m) * (a + Fraction(n_b) * b)


@dataclass
class Counters:
    flops: int = 0
    messages: int = 0
    bytes: int = 0

    def add(self, flops: int = 0, messages: int = 0, nbytes: int = 0) -> None:
        self.flops += int(flops)
        self.messages += int(messages)
        self.bytes += int(nbytes)

    def __iadd__(self, other: "Counters") -> "Counters":
        self.add(other.flops, other.messages, other.bytes)
        return self


@dataclass
class RunStats:
    wall: list[float] = field(default_factory=list)
    flops: list[int] = field(default_factory=list)
    messages: list[int] = field(default_factory=list)
    bytes: list[int] = field(default_factory=list)
    failures: dict[int, BaseException] = field(default_factory=dict)

    @property
    def max_wall(self) -> float:
        return max(self.wall) if self.wall else 0.0

    @property
    def total_flops(self) -> int:
        return sum(self.flops)

    @property
    def total_messages(self) -> int:
        return sum(self.messages)

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes)


class PartitionFailure(RuntimeError):
    def __init__(self, failures: dict[int, BaseException]):
        self.failures = failures
        detail = "; ".join(f"partition {i}: {e!r}" for i, e in sorted(failures.items()))
        super().__init__(f"{len(failures)} partition task(s) failed: {detail}")


def run_partitions(tasks: Sequence[Callable[[], Any]], workers: int = 1) -> tuple[list, RunStats]:
    """Run independent partition tasks on a thread pool.

    A task returns either ``value`` or ``(value, Counters)``. Results come back
    in task order. A task that raises yields ``None`` and its exception is
    recorded in ``stats.failures`` under the task index; the other tasks still
    run to completion.
    """

    def timed(i, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
            err = None
        except Exception as exc:  # collected, reported by partition id
            out, err = None, exc
        return out, err, time.perf_counter() - t0

    if workers <= 1 or len(tasks) <= 1:
        raw = [timed(i, fn) for i, fn in enumerate(tasks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(timed, i, fn) for i, fn in enumerate(tasks)]
            raw = [f.result() for f in futures]

    stats = RunStats()
    results = []
    for i, (out, err, wall) in enumerate(raw):
        counters = Counters()
        if err is not None:
            log.warning("partition %d failed: %r", i, err)
            stats.failures[i] = err
            out = None
        elif isinstance(out, tuple) and len(out) == 2 and isinstance(out[1], Counters):
            out, counters = out
        results.append(out)
        stats.wall.append(wall)
        stats.flops.append(counters.flops)
        stats.messages.append(counters.messages)
        stats.bytes.append(counters.bytes)
    return results, stats


# ---------------------------------------------------------------------------
# analytic speedups and weak scaling
# ---------------------------------------------------------------------------

SPEEDUP_VARIANTS = ("bk2_vs_dkrr", "bk2_2x_vs_dkrr")


def theoretical_speedup(n: int, p: int, variant: str = "bk2_vs_dkrr") -> float:
    """Ratio of ``n^3/p`` (distributed solve) to the per-machine cubic work of
    independent partitions holding ``n/p`` (or ``2n/p``) samples each."""
    if p < 1 or n < p:
        raise ValueError("need p >= 1 and n >= p")
    dkrr = Fraction(n) ** 3 / p
    if variant == "bk2_vs_dkrr":
        part = (Fraction(n) / p) ** 3
    elif variant == "bk2_2x_vs_dkrr":
        part = (Fraction(2 * n) / p) ** 3
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(dkrr / part)


def modeled_training_flops(strategy: str, n: int, p: int, max_part: int | None = None) -> Fraction:
    """Leading-order training flops per machine for one grid iteration.

    The exact solver on ``p`` machines does ``n^3/p``; partitioned strategies
    do ``m^3`` with ``m`` the largest partition (``n/p`` when balanced).
    """
    if strategy == "exact":
        return Fraction(n) ** 3 / p
    m = Fraction(n, p) if max_part is None else Fraction(max_part)
    return m ** 3


def dkrr_comm(n: int, p: int) -> tuple[int, int]:
    """(messages, bytes per message) charged per machine for one distributed
    factorization: ``sqrt(p)`` panel broadcasts moving ``8 n^2 / sqrt(p)``
    bytes in total."""
    if p <= 1:
        return 0, 0
    root = math.sqrt(p)
    msgs = max(1, math.ceil(root))
    vol = DKRR_VOLUME_CONSTANT * 8 * n * n / root
    return msgs, int(round(vol / msgs))


@dataclass(frozen=True)
class WeakScalingRow:
    p: int
    n: int
    modeled_seconds: float
    measured_seconds: float | None
    efficiency: float


def weak_scaling_report(strategy: str, base_p: int, base_n: int, steps: int,
                        model: CostModel | None = None, measured: Sequence[float] | None = None,
                        max_parts: Sequence[int] | None = None) -> list[WeakScalingRow]:
    """Double ``p`` and ``n`` together ``steps - 1`` times from the base point.

    Modeled time is the training compute of one grid iteration on the busiest
    machine; efficiency is base time over step time, computed in exact
    rational arithmetic so power-of-two laws come out exact.
    """
    if base_n % base_p:
        raise ValueError("base_n must be a multiple of base_p so n/p stays fixed")
    model = model or CostModel()
    strategy = strategy.lower()
    key = "exact" if strategy in ("exact", "dkrr") else "partitioned"
    rows = []
    t_base = None
    for s in range(steps):
        p, n = base_p << s, base_n << s
        f = modeled_training_flops(key, n, p, None if max_parts is None else max_parts[s])
        t = _exact_time(model, f)
        t_base = t if t_base is None else t_base
        eff = float(t_base / t) if t > 0 else 1.0
        meas = None if measured is None else float(measured[s])
        rows.append(WeakScalingRow(p, n, float(t), meas, eff))
    return rows


def imbalance_time_ratio(sizes: Sequence[int], exponent: int = 3) -> float:
    """Modeled slowest/fastest ratio when work grows like ``size**exponent``."""
    lo, hi = min(sizes), max(sizes)
    if lo <= 0:
        raise ValueError("sizes must be positive")
    return (hi / lo) ** exponent
