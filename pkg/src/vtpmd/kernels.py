"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise, or when
``VTPMD_PURE_PYTHON=1`` is set, the numpy fallback in ``_pykernels`` is used.
Decompositions look the backend up through :func:`get` on every call so tests and
benchmarks can switch with :func:`use`.
"""
import contextlib
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if os.environ.get("VTPMD_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
    _active = _pykernels
else:
    _active = _ckernels


def available():
    return sorted(_BACKENDS)


def get():
    return _active


def name():
    return _active.NAME


def set_backend(backend):
    global _active
    try:
        _active = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {backend!r}; have {available()}")


@contextlib.contextmanager
def use(backend):
    prev = _active
    set_backend(backend)
    try:
        yield _active
    finally:
        _restore(prev)


def _restore(mod):
    global _active
    _active = mod
