"""Numba switch for the hot kernels.

Set ``UAVLOC_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for the kernel benchmark). When numba is not importable the
numpy paths are used automatically.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and os.environ.get("UAVLOC_DISABLE_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)
