"""JIT switch for the hot kernels.

Numba is used when it is importable and ``QQM_DISABLE_NUMBA`` is unset or
false.  Setting ``QQM_DISABLE_NUMBA=1`` selects the pure-numpy kernels, which
produce results equal to the compiled ones to rounding.
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSEY


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag("QQM_DISABLE_NUMBA")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a pass-through decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def set_threads(n):
    """Cap numba worker threads; a no-op for the numpy backend."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
