"""Numba switch shared by the numeric kernels.

Set ``HARMCALC_DISABLE_NUMBA=1`` to force the pure-numpy code paths; they
produce identical results and are what runs when numba is not importable.
``HARMCALC_THREADS`` caps the number of worker threads used for chunked
enumeration and Monte Carlo shards.
"""

import os

_disabled = os.environ.get("HARMCALC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError("numba disabled by HARMCALC_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # bare decorator or decorator factory, like numba's
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def max_workers():
    """Worker cap from ``HARMCALC_THREADS`` (default 1)."""
    raw = os.environ.get("HARMCALC_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HARMCALC_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)
