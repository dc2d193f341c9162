"""Optional numba acceleration.

Kernels are written in the numba-compatible subset of numpy.  Setting
``TORCHRELAY_DISABLE_NUMBA=1`` (or running without numba installed) leaves
them as plain Python/numpy functions.
"""
import os

_DISABLED = os.environ.get("TORCHRELAY_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit
    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised by the fallback benchmark
    _njit = None
    NUMBA_ENABLED = False


def jit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
