"""Time the compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--d 2 5 10] [--n 1 500 20000]
"""
import argparse
import timeit

import numpy as np

from hwnmle import _kernels_py
from hwnmle.geometry import exp_origin
from hwnmle.rng import make_rng

try:
    from hwnmle import _kernels
except ImportError:
    _kernels = None


def _inputs(d, n, seed=0):
    rng = make_rng(seed)
    mu = exp_origin(rng.standard_normal(d)).coords
    Z = rng.standard_normal((n, d))
    X = _kernels_py.wrap_batch(mu, Z)
    return mu, Z, X


def _best(fn, budget=0.2):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    number = max(1, int(number * budget / 0.2))
    return min(timer.repeat(repeat=5, number=number)) / number


def run(dims, sizes):
    rows = []
    for d in dims:
        for n in sizes:
            mu, Z, X = _inputs(d, n)
            r = np.linalg.norm(Z, axis=1)
            cases = {
                "tangent_coords_batch": lambda m: m.tangent_coords_batch(mu, X),
                "wrap_batch": lambda m: m.wrap_batch(mu, Z),
                "scatter_phi": lambda m: m.scatter_phi(mu, X),
                "phi_batch": lambda m: m.phi_batch(r),
            }
            for name, call in cases.items():
                t_py = _best(lambda: call(_kernels_py))
                t_c = _best(lambda: call(_kernels)) if _kernels is not None else float("nan")
                rows.append((name, d, n, t_py, t_c))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, nargs="+", default=[2, 5, 10])
    ap.add_argument("--n", type=int, nargs="+", default=[1, 500, 20000])
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; only the NumPy timings are meaningful")
    print(f"{'kernel':<22}{'d':>4}{'n':>8}{'numpy [us]':>14}{'cython [us]':>14}{'speedup':>9}")
    for name, d, n, t_py, t_c in run(args.d, args.n):
        print(f"{name:<22}{d:>4}{n:>8}{t_py * 1e6:>14.1f}{t_c * 1e6:>14.1f}{t_py / t_c:>9.1f}")


if __name__ == "__main__":
    main()
