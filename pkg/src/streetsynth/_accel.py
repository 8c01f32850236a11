"""Numba switch.

Hot kernels are written once as plain Python over numpy arrays and compiled
with ``numba.njit`` unless ``STREETSYNTH_DISABLE_NUMBA`` is set to a truthy
value, in which case callers fall back to the numpy (or plain Python) twins.
"""
import os

_FLAG = os.environ.get("STREETSYNTH_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLE_NUMBA


def njit(func):
    """Compile ``func`` in nopython mode when numba is available.

    Always compiles when numba is importable so the benchmark can compare both
    paths in one process; whether callers dispatch to it is ``USE_NUMBA``.
    """
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)
