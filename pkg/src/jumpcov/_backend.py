"""Kernel backend selection.

The hot inner loops in ``jumpcov._kernels`` are written once as plain
Python/NumPy functions and compiled with numba's ``@njit`` unless the
environment variable ``JUMPCOV_BACKEND`` is set to ``numpy``, in which case
the uncompiled functions run as-is.  Both paths execute identical arithmetic
(no BLAS inside the kernels), so results are bit-for-bit reproducible across
backends; the numpy path is only slower.

``JUMPCOV_FIXED_CLOCK=1`` makes every reported wall time exactly 0.0 so that
artifacts written by the CLI are byte-identical across reruns.
"""

from __future__ import annotations

import os
import time

_VALID = ("numba", "numpy")


def backend_name() -> str:
    """Active kernel backend, resolved from JUMPCOV_BACKEND at import time."""
    return _BACKEND


def use_numba() -> bool:
    return _BACKEND == "numba"


def _resolve() -> str:
    raw = os.environ.get("JUMPCOV_BACKEND", "numba").strip().lower()
    if raw not in _VALID:
        raise ValueError(
            f"JUMPCOV_BACKEND must be one of {_VALID}, got {raw!r}"
        )
    if raw == "numba":
        try:
            import numba  # noqa: F401
        except ImportError:
            return "numpy"
    return raw


_BACKEND = _resolve()


def jit_kernel(func):
    """Compile ``func`` with njit on the numba backend, else return it unchanged."""
    if _BACKEND == "numba":
        from numba import njit

        return njit(cache=True, nogil=True)(func)
    return func


def fixed_clock() -> bool:
    return os.environ.get("JUMPCOV_FIXED_CLOCK", "") not in ("", "0")


def wall_clock() -> float:
    """Monotonic clock for timing reports; frozen at 0.0 under JUMPCOV_FIXED_CLOCK."""
    if fixed_clock():
        return 0.0
    return time.perf_counter()
