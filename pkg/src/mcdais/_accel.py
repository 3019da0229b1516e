"""JIT toggle.

Set ``MCDAIS_NUMBA=0`` before import to force the pure-numpy kernels.
"""

import os

_requested = os.environ.get("MCDAIS_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and _requested


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return _numba.njit(cache=True)(func)
