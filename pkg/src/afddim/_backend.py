"""Selection between the numba-compiled kernels and the pure-numpy fallback.

The backend is read once from ``AFDDIM_BACKEND`` (``numba`` or ``numpy``) at
import time and can be switched afterwards with :func:`set_backend` or the
:func:`use_backend` context manager. When numba is not importable the numpy
path is always used.
"""

import contextlib
import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _resolve(name):
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}; expected one of {_VALID}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_current = _resolve(os.environ.get("AFDDIM_BACKEND", "numba"))


def get_backend():
    return _current


def set_backend(name):
    """Set the active kernel backend and return the previous one."""
    global _current
    previous = _current
    _current = _resolve(name)
    return previous


@contextlib.contextmanager
def use_backend(name):
    previous = set_backend(name)
    try:
        yield _current
    finally:
        set_backend(previous)
