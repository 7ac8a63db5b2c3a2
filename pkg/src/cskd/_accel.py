"""Backend switch for the numeric kernels.

Kernels are compiled with numba when it is importable, unless the environment
variable ``CSKD_DISABLE_NUMBA`` is set to a truthy value, in which case the
pure-numpy/python fallbacks are used. Both paths produce bit-identical output.
"""

import os

_DISABLED = os.environ.get("CSKD_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
