"""Named benchmark datasets: MG, space_ga and cadata.

The real files are the LIBSVM regression sets of the same names. They are
looked up in ``$PARTKRR_DATA_DIR`` (default ``./data``) under the usual file
names and split into the published train/test sizes. When a file is missing
a deterministic stand-in with the same sizes and dimension is generated
instead and ``NamedData.standin`` is set, so reports can say which one ran:

* ``mg`` falls back to a Mackey-Glass (tau = 17) delay-embedding series,
  the process the MG set was sampled from;
* ``space_ga`` and ``cadata`` fall back to :func:`synth_clustered` data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SplitSpec, load_libsvm, shuffle_split, synth_clustered

# name -> (train, test, dimension)
TABLE = {
    "mg": (1024, 361, 6),
    "space_ga": (2560, 547, 6),
    "cadata": (18432, 2208, 8),
}
_FILES = {
    "mg": ("mg", "mg_scale", "mg.txt"),
    "space_ga": ("space_ga", "space_ga_scale", "space-ga", "space_ga.txt"),
    "cadata": ("cadata", "cadata.txt"),
}


@dataclass(frozen=True)
class NamedData:
    name: str
    train: Dataset
    test: Dataset
    source: str

    @property
    def standin(self) -> bool:
        return self.source.startswith("standin:")


def data_dir() -> Path:
    return Path(os.environ.get("PARTKRR_DATA_DIR", "data"))


def find_file(name: str, directory=None) -> Path | None:
    directory = Path(directory) if directory is not None else data_dir()
    for fname in _FILES[canonical(name)]:
        path = directory / fname
        if path.is_file():
            return path
    return None


def canonical(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in TABLE:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(TABLE)}")
    return key


def mackey_glass(length: int, tau: int = 17, beta: float = 0.2, gamma: float = 0.1, power: int = 10,
                 dt: float = 0.1, x0: float = 1.2, transient: int = 1000) -> np.ndarray:
    """Unit-spaced samples of the Mackey-Glass delay equation (Euler, step ``dt``)."""
    per = int(round(1.0 / dt))
    lag = int(round(tau / dt))
    total = (length + transient) * per
    x = np.empty(total + lag + 1)
    x[: lag + 1] = x0
    for t in range(lag, total + lag):
        xd = x[t - lag]
        x[t + 1] = x[t] + dt * (beta * xd / (1.0 + xd ** power) - gamma * x[t])
    return x[lag + 1 + transient * per:: per][:length]


def mackey_glass_regression(n: int, d: int = 6, spacing: int = 6, horizon: int = 6) -> Dataset:
    """Predict ``x(t + horizon)`` from ``x(t), x(t - spacing), ...`` (``d`` lags)."""
    span = (d - 1) * spacing
    series = mackey_glass(n + span + horizon)
    X = np.stack([series[span - j * spacing: span - j * spacing + n] for j in range(d)], axis=1)
    y = series[span + horizon: span + horizon + n]
    return Dataset.from_dense(X, y)


def standin(name: str) -> Dataset:
    name = canonical(name)
    n_train, n_test, d = TABLE[name]
    n = n_train + n_test
    if name == "mg":
        return mackey_glass_regression(n, d)
    seed = {"space_ga": 3107, "cadata": 20640}[name]
    return synth_clustered(n, d, d, 0.1, seed)


def load_named(name: str, seed: int = 0, directory=None, allow_standin: bool = True) -> NamedData:
    """Train/test split of a named dataset with its published sizes."""
    name = canonical(name)
    n_train, n_test, _ = TABLE[name]
    path = find_file(name, directory)
    if path is not None:
        full, source = load_libsvm(path), f"file:{path}"
    elif allow_standin:
        full, source = standin(name), f"standin:{'mackey-glass' if name == 'mg' else 'synth_clustered'}"
    else:
        raise FileNotFoundError(f"{name} not found in {directory or data_dir()}")
    frac = n_test / (n_train + n_test)
    train, test = shuffle_split(full, SplitSpec(seed, frac))
    return NamedData(name, train, test, source)
