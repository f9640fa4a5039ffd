"""Backend switch between numba-compiled kernels and the pure-numpy path.

Set ``FLEXKRYLOV_DISABLE_NUMBA=1`` in the environment to force the numpy
fallback at import time, or call :func:`set_numba` at runtime.
"""

import os

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

ENV_FLAG = "FLEXKRYLOV_DISABLE_NUMBA"

_enabled = HAVE_NUMBA and os.environ.get(ENV_FLAG, "").lower() not in ("1", "true", "yes", "on")


def numba_enabled():
    return _enabled


def set_numba(flag):
    """Enable or disable the compiled kernels; returns the previous setting."""
    global _enabled
    previous = _enabled
    _enabled = bool(flag) and HAVE_NUMBA
    return previous


def optional_njit(*args, **kwargs):
    """``njit`` when numba is importable, identity otherwise."""

    def decorator(func):
        if HAVE_NUMBA:
            return njit(*args, **kwargs)(func)
        return func

    return decorator
