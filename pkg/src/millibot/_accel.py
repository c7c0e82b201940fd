"""Numba switch.

Set ``MILLIBOT_NO_NUMBA=1`` before import to run every kernel on its
pure numpy/python path.  Numba is optional; without it the fallback is used
automatically.
"""

import os
import warnings

_DISABLED = os.environ.get("MILLIBOT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    if not _DISABLED:
        warnings.warn("numba not found; using the numpy fallback kernels")

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def jit(fn):
    """Compile ``fn`` with ``numba.njit`` when available, else return it unchanged.

    Always compiles when numba is importable, regardless of the env flag, so the
    benchmark can compare both paths in one process.  Dispatch between paths is
    done by the callers through ``USE_NUMBA``.
    """
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
