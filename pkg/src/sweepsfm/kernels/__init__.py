"""Hot inner loops of both cost volumes.

``backend`` is the implementation in use (numba unless disabled through
``SWEEPSFM_DISABLE_NUMBA``); :func:`get_backend` gives access to either one
explicitly, which is what the cross-check tests and the benchmark do.
"""

from __future__ import annotations

from types import ModuleType

from .._accel import USE_NUMBA
from . import numpy_impl

BACKENDS = ("numpy", "numba")


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        name = "numba" if USE_NUMBA else "numpy"
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")


backend = get_backend()
backend_name = "numba" if USE_NUMBA else "numpy"

# geometry-only helpers are cheap and always numpy
warp_grid = numpy_impl.warp_grid
sample_bilinear = numpy_impl.sample_bilinear
sample_nearest = numpy_impl.sample_nearest
sample_depth_bilinear = numpy_impl.sample_depth_bilinear


def dcv_cost(*args, **kwargs):
    return backend.dcv_cost(*args, **kwargs)


def pcv_scores(*args, **kwargs):
    return backend.pcv_scores(*args, **kwargs)
