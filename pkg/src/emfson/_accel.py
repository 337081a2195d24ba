"""Numba availability and the switch between compiled and numpy kernels.

Set ``EMFSON_DISABLE_NUMBA=1`` in the environment to force the pure-numpy
path (useful for debugging, profiling, or platforms without llvmlite).
"""

import os

DISABLE_ENV = "EMFSON_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(DISABLE_ENV, "").strip().lower() not in (
    "1",
    "true",
    "yes",
)


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op when numba is missing."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)
