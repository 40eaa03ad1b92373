"""Kernel backend selection.

The hot inner loops (3x3 convolution, 2x2 max pooling, the GRU scan) exist
twice: JIT-compiled numba kernels and a pure-numpy fallback. The active
backend is chosen by the SPECRNET_BACKEND environment variable ("numba" or
"numpy"); unset means numba when importable, numpy otherwise. Both produce
the same results up to floating-point summation order.
"""

from __future__ import annotations

import importlib
import os

_ENV_VAR = "SPECRNET_BACKEND"
_active: str | None = None


def _numba_usable() -> bool:
    try:
        importlib.import_module("numba")
        return True
    except ImportError:
        return False


def available_backends() -> list[str]:
    names = ["numpy"]
    if _numba_usable():
        names.insert(0, "numba")
    return names


def set_backend(name: str) -> None:
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r} (want 'numba' or 'numpy')")
    if name == "numba" and not _numba_usable():
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name


def active_backend() -> str:
    global _active
    if _active is None:
        env = os.environ.get(_ENV_VAR, "").strip().lower()
        if env:
            set_backend(env)
        else:
            _active = "numba" if _numba_usable() else "numpy"
    return _active


def kernels():
    """Module implementing the kernel interface for the active backend."""
    if active_backend() == "numba":
        from . import kernels_numba
        return kernels_numba
    from . import kernels_numpy
    return kernels_numpy
