"""Hot pair-scan kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``TORUSFLOW_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

_CHUNK = 256


def min_z_scan_py(pts, normals, phi):
    pts = np.ascontiguousarray(pts, dtype=float)
    normals = np.ascontiguousarray(normals, dtype=float)
    phi = np.ascontiguousarray(phi, dtype=float)
    n = pts.shape[0]
    best, bi, bj = np.inf, -1, -1
    for start in range(0, n, _CHUNK):
        rows = slice(start, min(start + _CHUNK, n))
        diff = pts[None, :, :] - pts[rows, None, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        dot = np.einsum("ijk,ik->ij", diff, normals[rows])
        z = phi[rows, None] * sq + 2.0 * dot
        idx = np.arange(rows.start, rows.stop)
        z[idx - rows.start, idx] = np.inf
        k = int(np.argmin(z))
        i, j = divmod(k, n)
        if z[i, j] < best:
            best, bi, bj = float(z[i, j]), rows.start + i, j
    return best, bi, bj


def max_pair_distance_py(pts):
    pts = np.ascontiguousarray(pts, dtype=float)
    n = pts.shape[0]
    best = 0.0
    for start in range(0, n, _CHUNK):
        diff = pts[None, :, :] - pts[start : start + _CHUNK, None, :]
        best = max(best, float(np.einsum("ijk,ijk->ij", diff, diff).max()))
    return float(np.sqrt(best))


BACKEND = "python"
if os.environ.get("TORUSFLOW_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import max_pair_distance as _max_c
        from ._kernels import min_z_scan as _minz_c

        BACKEND = "compiled"
    except ImportError:
        pass


def min_z_scan(pts, normals, phi):
    """``(min_Z, i, j)`` over ordered pairs ``i != j``."""
    if BACKEND == "compiled":
        return _minz_c(
            np.ascontiguousarray(pts, dtype=float),
            np.ascontiguousarray(normals, dtype=float),
            np.ascontiguousarray(phi, dtype=float),
        )
    return min_z_scan_py(pts, normals, phi)


def max_pair_distance(pts):
    if BACKEND == "compiled":
        return _max_c(np.ascontiguousarray(pts, dtype=float))
    return max_pair_distance_py(pts)
