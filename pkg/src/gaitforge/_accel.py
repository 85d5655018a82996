"""Kernel acceleration switch.

Hot numeric kernels ship in two variants: a numba ``@njit`` build and a
vectorized-numpy fallback. ``GAITFORGE_NO_NUMBA=1`` forces the numpy path
(useful on machines without a working LLVM toolchain and for A/B
benchmarking, see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os


def _want_numba() -> bool:
    flag = os.environ.get("GAITFORGE_NO_NUMBA", "0").strip().lower()
    return flag not in ("1", "true", "yes", "on")


NUMBA_ENABLED = False
if _want_numba():
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise.

    Modules guarded by NUMBA_ENABLED should only decorate loop kernels that
    also have a numpy twin; the decorated Python function is never the
    fallback path itself.
    """
    if NUMBA_ENABLED:
        from numba import njit as _njit

        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap
