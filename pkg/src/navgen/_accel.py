"""JIT selection for the numeric kernels.

Kernels are written once as plain numpy/Python and compiled with
``numba.njit`` unless ``NAVGEN_DISABLE_NUMBA=1`` is set (or numba is not
importable), in which case the same source runs interpreted and the
vectorized numpy fallbacks in :mod:`navgen.kernels` are used where present.
"""
from __future__ import annotations

import functools
import os

_disabled = os.environ.get("NAVGEN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    USE_NUMBA = True
except ImportError:
    USE_NUMBA = False
    _njit = None


def jit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if USE_NUMBA:
            return _njit(**kwargs)(f)

        @functools.wraps(f)
        def inner(*args, **kw):
            return f(*args, **kw)

        inner.py_func = f
        return inner

    if func is not None:
        return wrap(func)
    return wrap


__all__ = ["jit", "USE_NUMBA"]
