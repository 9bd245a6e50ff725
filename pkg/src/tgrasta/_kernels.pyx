# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bilinear sampling kernels (see ``_kernels_py`` for the reference)."""
import numpy as np
from libc.math cimport floor


cdef inline void _cell(double coord, Py_ssize_t size, Py_ssize_t *i0,
                       double *f, bint *clamped) noexcept nogil:
    cdef double c = coord
    cdef double hi = <double>(size - 1)
    clamped[0] = coord < 0.0 or coord > hi
    if c < 0.0:
        c = 0.0
    elif c > hi:
        c = hi
    cdef Py_ssize_t i = <Py_ssize_t>floor(c)
    if i > size - 2:
        i = size - 2
    i0[0] = i
    f[0] = c - <double>i


cdef inline double _interp(const double[:, ::1] img, Py_ssize_t x0, double fx,
                           Py_ssize_t y0, double fy) noexcept nogil:
    cdef double top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x0 + 1]
    cdef double bot = (1.0 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bot


def bilinear(const double[:, ::1] img, const double[::1] xs, const double[::1] ys):
    cdef Py_ssize_t n = xs.shape[0], k, x0, y0
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef double fx, fy
    cdef bint cx, cy
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            _cell(xs[k], w, &x0, &fx, &cx)
            _cell(ys[k], h, &y0, &fy, &cy)
            o[k] = _interp(img, x0, fx, y0, fy)
    return out


cdef inline double _slope(double a_minus, double a0, double a1, double f, Py_ssize_t i0) noexcept nogil:
    if f == 0.0 and i0 >= 1:
        return 0.5 * (a1 - a_minus)
    return a1 - a0


def bilinear_grad(const double[:, ::1] img, const double[::1] xs, const double[::1] ys):
    cdef Py_ssize_t n = xs.shape[0], k, x0, y0, xm, ym
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef double fx, fy, sx_top, sx_bot, sy_left, sy_right
    cdef bint cx, cy
    v = np.empty(n, dtype=np.float64)
    dx = np.empty(n, dtype=np.float64)
    dy = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = v, odx = dx, ody = dy
    with nogil:
        for k in range(n):
            _cell(xs[k], w, &x0, &fx, &cx)
            _cell(ys[k], h, &y0, &fy, &cy)
            ov[k] = _interp(img, x0, fx, y0, fy)
            xm = x0 - 1 if x0 >= 1 else 0
            ym = y0 - 1 if y0 >= 1 else 0
            if cx:
                odx[k] = 0.0
            else:
                sx_top = _slope(img[y0, xm], img[y0, x0], img[y0, x0 + 1], fx, x0)
                sx_bot = _slope(img[y0 + 1, xm], img[y0 + 1, x0], img[y0 + 1, x0 + 1], fx, x0)
                odx[k] = (1.0 - fy) * sx_top + fy * sx_bot
            if cy:
                ody[k] = 0.0
            else:
                sy_left = _slope(img[ym, x0], img[y0, x0], img[y0 + 1, x0], fy, y0)
                sy_right = _slope(img[ym, x0 + 1], img[y0, x0 + 1], img[y0 + 1, x0 + 1], fy, y0)
                ody[k] = (1.0 - fx) * sy_left + fx * sy_right
    return v, dx, dy
