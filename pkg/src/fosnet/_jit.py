"""Numba dispatch switch.

Set ``FOSNET_DISABLE_NUMBA=1`` to run every hot kernel on its pure-numpy path.
"""

import os

try:
    import numba

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAS_NUMBA = False


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = _HAS_NUMBA and not _flag("FOSNET_DISABLE_NUMBA")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not _HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)
