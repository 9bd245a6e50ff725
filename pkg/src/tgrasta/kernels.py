"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Set ``TGRASTA_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TGRASTA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def _prep(img, xs, ys):
    return (
        np.ascontiguousarray(img, dtype=np.float64),
        np.ascontiguousarray(xs, dtype=np.float64).ravel(),
        np.ascontiguousarray(ys, dtype=np.float64).ravel(),
    )


def bilinear(img, xs, ys, backend=None):
    impl = _select(backend)
    img, xs, ys = _prep(img, xs, ys)
    return impl.bilinear(img, xs, ys)


def bilinear_grad(img, xs, ys, backend=None):
    """Return ``(values, d/dx, d/dy)`` of the bilinear interpolant at the points."""
    impl = _select(backend)
    img, xs, ys = _prep(img, xs, ys)
    return impl.bilinear_grad(img, xs, ys)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {backend!r}")
