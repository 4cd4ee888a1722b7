"""Backend selection for the numeric kernels.

Hot loops are compiled with numba when it is importable. Setting the
environment variable ``PARTKRR_DISABLE_NUMBA=1`` (read once, at import time)
forces the vectorised pure-numpy implementations instead.
"""

from __future__ import annotations

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("PARTKRR_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise the identity decorator.

    The loop implementations are always defined so they can be benchmarked and
    tested against the numpy path; without numba they simply run as (slow)
    Python.
    """
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return _numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
