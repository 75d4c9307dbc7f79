"""Backend selection for the hot kernels.

The compiled extension ``acvlab._kernels`` is used when it imports;
otherwise the numpy twin in ``acvlab._kernels_py``. Setting
``ACVLAB_PURE_PYTHON=1`` forces the fallback. Both expose the same functions
and agree bitwise.
"""

from __future__ import annotations

import importlib
import os
from contextlib import contextmanager

from . import _kernels_py

_compiled = None
if not os.environ.get("ACVLAB_PURE_PYTHON"):
    try:
        _compiled = importlib.import_module("acvlab._kernels")
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

_threads = int(os.environ.get("ACVLAB_THREADS", "1"))


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available in this build")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None


def set_threads(n: int) -> None:
    """Set the worker count used by the compiled stencil and quadrature loops."""
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def threads() -> int:
    return _threads


@contextmanager
def use_backend(name: str):
    """Temporarily route every kernel call through the named backend."""
    global impl
    prev = impl
    impl = get_backend(name)
    try:
        yield impl
    finally:
        impl = prev


@contextmanager
def use_threads(n: int):
    prev = _threads
    set_threads(n)
    try:
        yield
    finally:
        set_threads(prev)
