import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import bilinear_oracle
from tgrasta import kernels

cython_only = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def test_python_backend_matches_pointwise_oracle(rng):
    img = rng.random((9, 11))
    xs = rng.uniform(-2, 12, 300)
    ys = rng.uniform(-2, 10, 300)
    got = kernels.bilinear(img, xs, ys, backend="python")
    want = [bilinear_oracle(img, x, y) for x, y in zip(xs, ys)]
    assert np.max(np.abs(got - want)) <= 1e-12


def test_gradient_is_interpolant_derivative_off_grid(rng):
    img = rng.random((12, 12))
    xs = rng.uniform(1, 10, 200)
    ys = rng.uniform(1, 10, 200)
    xs[np.abs(xs - np.round(xs)) < 1e-3] += 0.01
    ys[np.abs(ys - np.round(ys)) < 1e-3] += 0.01
    _, dx, dy = kernels.bilinear_grad(img, xs, ys, backend="python")
    h = 1e-7
    fdx = (kernels.bilinear(img, xs + h, ys) - kernels.bilinear(img, xs - h, ys)) / (2 * h)
    fdy = (kernels.bilinear(img, xs, ys + h) - kernels.bilinear(img, xs, ys - h)) / (2 * h)
    assert np.allclose(dx, fdx, atol=1e-6) and np.allclose(dy, fdy, atol=1e-6)


def test_gradient_on_nodes_is_central_difference(rng):
    img = rng.random((6, 7))
    ys, xs = np.mgrid[1:5, 1:6].astype(np.float64)
    _, dx, dy = kernels.bilinear_grad(img, xs.ravel(), ys.ravel(), backend="python")
    gy, gx = np.gradient(img)
    assert np.allclose(dx, gx[1:5, 1:6].ravel(), atol=1e-15)
    assert np.allclose(dy, gy[1:5, 1:6].ravel(), atol=1e-15)


def test_clamped_axis_has_zero_gradient(rng):
    img = rng.random((5, 5))
    v, dx, dy = kernels.bilinear_grad(img, np.array([-1.0, 2.5, 7.0]), np.array([2.5, 9.0, 2.5]))
    assert dx[0] == 0.0 and dx[2] == 0.0 and dy[1] == 0.0
    assert dy[0] != 0.0 and dx[1] != 0.0


@cython_only
@settings(max_examples=40, deadline=None)
@given(img=arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12)),
                  elements=st.floats(0, 1)),
       pts=st.lists(st.tuples(st.floats(-5, 20), st.floats(-5, 20)), min_size=1, max_size=40))
def test_backends_bit_identical(img, pts):
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    assert np.array_equal(kernels.bilinear(img, xs, ys, backend="python"),
                          kernels.bilinear(img, xs, ys, backend="cython"))
    a = kernels.bilinear_grad(img, xs, ys, backend="python")
    b = kernels.bilinear_grad(img, xs, ys, backend="cython")
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@cython_only
def test_backends_identical_on_grid_nodes(rng):
    img = rng.random((20, 30))
    ys, xs = np.mgrid[-1:21, -1:31].astype(np.float64)
    a = kernels.bilinear_grad(img, xs.ravel(), ys.ravel(), backend="python")
    b = kernels.bilinear_grad(img, xs.ravel(), ys.ravel(), backend="cython")
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_env_var_forces_fallback():
    code = "from tgrasta import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, TGRASTA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.bilinear(np.zeros((2, 2)), [0.0], [0.0], backend="fortran")
