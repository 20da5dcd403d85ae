"""Numba toggle for the hot kernels.

The integration kernels compile with numba by default. Setting
``REHABKIT_NUMBA=0`` (or ``false``/``no``/``off``) before import selects a
pure-NumPy interpreter path with identical semantics, useful for debugging
and as a reference implementation. The flag is read once at import time.
"""

import os


def _flag_enabled() -> bool:
    raw = os.environ.get("REHABKIT_NUMBA", "1").strip().lower()
    return raw not in ("0", "false", "no", "off")


NUMBA_ENABLED = _flag_enabled()

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """Pass-through decorator standing in for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
