"""Numba switch shared by the kernel modules.

Set ``FLOWCUT_NUMBA=0`` before import to force the pure-numpy kernels.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FLOWCUT_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def njit(func=None, **options):
    """Compile in nopython mode when numba is importable, else return the function as is.

    Usable bare (``@njit``) or with numba options (``@njit(fastmath=True)``).
    """
    if func is None:
        return lambda f: njit(f, **options)
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True, **options)(func)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def max_workers():
    """Worker cap from ``FLOWCUT_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("FLOWCUT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
