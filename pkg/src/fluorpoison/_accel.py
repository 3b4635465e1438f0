"""Numba switch.

Kernels are compiled with numba unless ``FLUORPOISON_DISABLE_NUMBA`` is set to a
truthy value (or numba cannot be imported), in which case the pure-numpy
implementations in :mod:`fluorpoison.kernels` are used instead.
"""

import os

_FLAG = "FLUORPOISON_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; raises if numba is missing."""
    if not HAVE_NUMBA:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)
