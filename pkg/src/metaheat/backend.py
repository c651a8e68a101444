"""Kernel backend selection.

Hot loops live in :mod:`metaheat.kernels` and are compiled with numba's
``@njit`` by default.  Setting ``METAHEAT_JIT=0`` in the environment skips
compilation and runs the very same function bodies as plain Python/NumPy:
much slower, bit-identical results.  ``METAHEAT_JIT=1`` forces numba and
raises if it cannot be imported.
"""

import os

_flag = os.environ.get("METAHEAT_JIT", "auto").strip().lower()

if _flag in ("0", "off", "false", "no"):
    JIT_ENABLED = False
elif _flag in ("", "auto"):
    try:
        import numba  # noqa: F401

        JIT_ENABLED = True
    except ImportError:
        JIT_ENABLED = False
elif _flag in ("1", "on", "true", "yes"):
    import numba  # noqa: F401

    JIT_ENABLED = True
else:
    raise ValueError(f"unrecognized METAHEAT_JIT value: {_flag!r}")


def maybe_jit(func):
    """Decorate ``func`` with numba.njit when the JIT backend is enabled.

    The undecorated function stays reachable either way: numba exposes it as
    ``func.py_func``, and with the JIT disabled the function itself is
    returned unchanged.
    """
    if JIT_ENABLED:
        from numba import njit

        return njit(cache=True)(func)
    return func


def py_func(kernel):
    """Return the pure-Python implementation backing a (possibly jitted) kernel."""
    return getattr(kernel, "py_func", kernel)
