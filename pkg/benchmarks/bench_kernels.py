"""Compiled vs numpy pair-scan kernels on sphere-grid sized point clouds.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from torusflow import kernels
from torusflow.harmonics import SphereGrid


def cloud(max_degree, seed=0):
    grid = SphereGrid.for_degree(2, max_degree)
    rng = np.random.default_rng(seed)
    pts = grid.points * (1.0 + 0.05 * rng.standard_normal(grid.size))[:, None]
    phi = rng.uniform(0.8, 1.2, grid.size)
    return pts, grid.points.copy(), phi


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--degrees", type=int, nargs="+", default=[8, 12, 16, 24])
    args = ap.parse_args(argv)
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not available; build it with pip install -e .")
    print(f"{'L':>3} {'nodes':>6} {'kernel':<18} {'compiled ms':>12} {'numpy ms':>10} {'speedup':>8}")
    for L in args.degrees:
        pts, normals, phi = cloud(L)
        cases = [
            ("min_z_scan", lambda: kernels.min_z_scan(pts, normals, phi), lambda: kernels.min_z_scan_py(pts, normals, phi)),
            ("max_pair_distance", lambda: kernels.max_pair_distance(pts), lambda: kernels.max_pair_distance_py(pts)),
        ]
        for name, fast, slow in cases:
            a = fast()
            b = slow()
            if not np.allclose(np.atleast_1d(a)[0], np.atleast_1d(b)[0], rtol=1e-12):
                raise SystemExit(f"{name}: backends disagree ({a} vs {b})")
            tc = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
            tp = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
            print(f"{L:>3} {pts.shape[0]:>6} {name:<18} {tc:>12.2f} {tp:>10.2f} {tp / tc:>8.1f}")


if __name__ == "__main__":
    main()
