"""Numba switch.

``DROWSYQ_NUMBA=0`` forces the pure-numpy kernels; any other value (or unset)
uses numba when it is importable.
"""

import os

_requested = os.environ.get("DROWSYQ_NUMBA", "1").strip().lower() not in ("0", "false", "off", "no")

try:
    from numba import njit  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper


USE_NUMBA = HAVE_NUMBA and _requested
