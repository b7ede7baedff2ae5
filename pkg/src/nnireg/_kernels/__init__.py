"""Iteration-loop backend selection.

Imports the compiled Cython loops when the extension was built, otherwise the
NumPy fallback.  Both expose the same functions and constants and produce the
same iterates up to floating-point roundoff of the shared BLAS calls; within
one backend results are exactly deterministic.

Set NNIREG_FORCE_PY_KERNELS=1 to force the fallback (used by the benchmark
and the backend-equivalence tests).
"""

import os

from nnireg._kernels import _loops_py as py_backend

if os.environ.get("NNIREG_FORCE_PY_KERNELS"):
    _impl = py_backend
    KERNEL_BACKEND = "python"
else:
    try:
        from nnireg._kernels import _loops as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "cython"
    except ImportError:
        _impl = py_backend
        KERNEL_BACKEND = "python"

fixed_point_loop = _impl.fixed_point_loop
landweber_loop = _impl.landweber_loop

STOP_NONE = py_backend.STOP_NONE
STOP_MOROZOV = py_backend.STOP_MOROZOV
STOP_MODIFIED = py_backend.STOP_MODIFIED
MAP_ABS = py_backend.MAP_ABS
MAP_POSPART = py_backend.MAP_POSPART
MAP_BLEND = py_backend.MAP_BLEND
REASON_CAP = py_backend.REASON_CAP
REASON_DISCREPANCY = py_backend.REASON_DISCREPANCY
REASON_TARGET = py_backend.REASON_TARGET

__all__ = [
    "KERNEL_BACKEND",
    "fixed_point_loop",
    "landweber_loop",
    "STOP_NONE",
    "STOP_MOROZOV",
    "STOP_MODIFIED",
    "MAP_ABS",
    "MAP_POSPART",
    "MAP_BLEND",
    "REASON_CAP",
    "REASON_DISCREPANCY",
    "REASON_TARGET",
]
