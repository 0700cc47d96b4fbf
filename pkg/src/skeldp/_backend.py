"""Numba/NumPy backend selection.

Hot kernels are compiled with numba unless the environment variable
``SKELDP_NO_NUMBA`` is set to a non-empty value (or numba is missing), in
which case vectorized NumPy fallbacks are used.  ``skeldp.backend_name()``
reports which path is active.
"""

import os

_DISABLED = bool(os.environ.get("SKELDP_NO_NUMBA", ""))

if not _DISABLED:
    try:
        from numba import njit as _numba_njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when active, identity decorator otherwise.

    The decorated scalar functions stay importable either way; the NumPy
    fallback modules never call them in hot loops.
    """
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba_njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(fn):
        return fn

    return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
