"""Numba detection and the backend switch.

Set ``SSGMCMC_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("SSGMCMC_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, else an identity decorator.

    The compiled function is always built when numba is importable so that
    both paths can be compared side by side; ``USE_NUMBA`` only decides which
    one the public kernel names point at.
    """
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
