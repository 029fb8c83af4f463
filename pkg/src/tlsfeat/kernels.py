"""Kernel backend selection.

The compiled Cython kernels are used when importable; otherwise the
pure-Python versions. Set ``TLSFEAT_PURE=1`` to force the fallback.
"""
import importlib
import os

from . import _purekernels

__all__ = ["BACKEND", "decode_frame", "update_histogram", "describe", "load_backend"]


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _purekernels
    if name == "cython":
        return importlib.import_module("tlsfeat._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if os.environ.get("TLSFEAT_PURE"):
    _impl = _purekernels
    BACKEND = "python"
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = _purekernels
        BACKEND = "python"

NOT_TCP = _purekernels.NOT_TCP
MALFORMED = _purekernels.MALFORMED
decode_frame = _impl.decode_frame
update_histogram = _impl.update_histogram
describe = _impl.describe
