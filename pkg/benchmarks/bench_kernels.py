"""Compare the compiled and pure-Python warp kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat 20]
Prints per-call time for each backend, the speedup, and whether the two
backends agree bit for bit.
"""
import argparse
import timeit

import numpy as np

from tgrasta import kernels


def _case(side, rng):
    img = rng.random((side + 16, side + 16))
    ys, xs = np.mgrid[0:side, 0:side].astype(np.float64)
    th = 0.05
    xw = np.cos(th) * xs - np.sin(th) * ys + 8.3
    yw = np.sin(th) * xs + np.cos(th) * ys + 7.6
    return img, xw.ravel(), yw.ravel()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--sizes", type=int, nargs="+", default=[48, 96, 192, 384])
    args = parser.parse_args()
    try:
        from tgrasta import _kernels  # noqa: F401
    except ImportError:
        raise SystemExit("compiled kernels not built; run: python3 setup.py build_ext --inplace")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'pixels':>9}{'python ms':>12}{'cython ms':>12}{'speedup':>9}  identical")
    for side in args.sizes:
        img, xs, ys = _case(side, rng)
        calls = {
            "bilinear": lambda b: kernels.bilinear(img, xs, ys, backend=b),
            "bilinear_grad": lambda b: kernels.bilinear_grad(img, xs, ys, backend=b),
        }
        for name, fn in calls.items():
            t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
                 for b in ("python", "cython")}
            a, c = fn("python"), fn("cython")
            same = all(np.array_equal(x, y) for x, y in zip(np.atleast_2d(a), np.atleast_2d(c)))
            print(f"{name:<14}{side * side:>9}{t['python']:>12.3f}{t['cython']:>12.3f}"
                  f"{t['python'] / t['cython']:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
