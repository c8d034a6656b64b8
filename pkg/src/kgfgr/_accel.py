"""Switch between numba-compiled kernels and their plain numpy twins.

Set ``KGFGR_DISABLE_NUMBA=1`` before import to dispatch every kernel to
the vectorized versions in ``_np_kernels``. With the flag set, ``njit``
is an identity decorator, so ``_jit_kernels`` still imports and runs as
plain Python loops.
"""
import os

_FALSE = {"", "0", "false", "no", "off"}

DISABLE_NUMBA = os.environ.get("KGFGR_DISABLE_NUMBA", "0").strip().lower() not in _FALSE

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    DISABLE_NUMBA = True

USE_NUMBA = not DISABLE_NUMBA


def _identity(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        fn = args[0]
        fn.py_func = fn
        return fn

    def wrap(fn):
        fn.py_func = fn
        return fn

    return wrap


if USE_NUMBA:
    njit = _nb.njit
else:
    njit = _identity


def backend():
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"
