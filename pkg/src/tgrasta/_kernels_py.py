"""Pure-numpy bilinear sampling kernels.

Reference implementation and fallback for the compiled ``_kernels`` module.
Both must produce bit-identical output: same clamping rule, same
evaluation order of the interpolation and slope formulas.
"""
import numpy as np


def _cell(coord, size):
    c = np.clip(coord, 0.0, size - 1.0)
    i0 = np.minimum(np.floor(c).astype(np.intp), size - 2)
    return i0, c - i0, (coord < 0.0) | (coord > size - 1.0)


def _interp(img, x0, fx, y0, fy):
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x0 + 1]
    bot = (1.0 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bot


def bilinear(img, xs, ys):
    """Sample ``img`` (h, w) at points (xs, ys), coordinates clamped to the domain."""
    h, w = img.shape
    x0, fx, _ = _cell(xs, w)
    y0, fy, _ = _cell(ys, h)
    return _interp(img, x0, fx, y0, fy)


def _slope(a_minus, a0, a1, f, i0):
    """Derivative of the piecewise-linear interpolant along one axis.

    Inside a cell it is the cell's slope ``a1 - a0``; exactly on an interior
    node the two one-sided slopes are averaged (a central difference).
    """
    return np.where((f == 0.0) & (i0 >= 1), 0.5 * (a1 - a_minus), a1 - a0)


def bilinear_grad(img, xs, ys):
    """Sample an image and the exact spatial derivatives of its bilinear interpolant.

    Derivatives are zeroed along any axis whose coordinate was clamped, since
    the clamped warp is locally constant in that direction.
    """
    h, w = img.shape
    x0, fx, cx = _cell(xs, w)
    y0, fy, cy = _cell(ys, h)
    v = _interp(img, x0, fx, y0, fy)
    xm = np.maximum(x0 - 1, 0)
    ym = np.maximum(y0 - 1, 0)
    sx_top = _slope(img[y0, xm], img[y0, x0], img[y0, x0 + 1], fx, x0)
    sx_bot = _slope(img[y0 + 1, xm], img[y0 + 1, x0], img[y0 + 1, x0 + 1], fx, x0)
    sy_left = _slope(img[ym, x0], img[y0, x0], img[y0 + 1, x0], fy, y0)
    sy_right = _slope(img[ym, x0 + 1], img[y0, x0 + 1], img[y0 + 1, x0 + 1], fy, y0)
    dx = (1.0 - fy) * sx_top + fy * sx_bot
    dy = (1.0 - fx) * sy_left + fx * sy_right
    dx[cx] = 0.0
    dy[cy] = 0.0
    return v, dx, dy
