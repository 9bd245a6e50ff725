import math

import numpy as np
import pytest
from scipy import ndimage

_ACCEPTANCE = {}


def smooth_image(rng, h, w, sigma=2.5, lo=0.1, hi=0.9):
    """Random smooth image rescaled into [lo, hi]."""
    f = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma, mode="reflect")
    f = (f - f.min()) / (f.max() - f.min())
    return lo + (hi - lo) * f


def bilinear_oracle(img, x, y):
    """Scalar bilinear sample with clamped coordinates, written out pointwise."""
    h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    j = min(int(math.floor(x)), w - 2)
    i = min(int(math.floor(y)), h - 2)
    fx, fy = x - j, y - i
    top = (1 - fx) * img[i, j] + fx * img[i, j + 1]
    bot = (1 - fx) * img[i + 1, j] + fx * img[i + 1, j + 1]
    return (1 - fy) * top + fy * bot


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; summarized at the end of the run."""

    def record(k, passed, detail):
        _ACCEPTANCE[k] = (bool(passed), detail)
        print(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if passed else 'FAIL'} - {detail}")
