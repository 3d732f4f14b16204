"""Kernel backend selection.

The compiled extension is used when it imports; set ``FMLSMR_PURE_PYTHON=1``
to force the NumPy fallback.
"""
import contextlib
import os

from . import _pykernels

kernels = _pykernels
if os.environ.get("FMLSMR_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as kernels  # noqa: F811
    except ImportError:  # extension not built
        kernels = _pykernels

BACKEND = kernels.BACKEND
COMPILED = BACKEND == "cython"


def available_backends():
    """Return the kernel modules importable in this environment, by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


@contextlib.contextmanager
def use_backend(name):
    """Temporarily route all kernels through backend ``name``.

    Affects the whole process, so do not use it while other threads solve.
    """
    global kernels
    mods = available_backends()
    if name not in mods:
        raise ValueError(f"backend {name!r} not available (have {sorted(mods)})")
    saved = kernels
    kernels = mods[name]
    try:
        yield kernels
    finally:
        kernels = saved
