# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair-scan kernels."""

import numpy as np
from libc.math cimport sqrt, INFINITY


def min_z_scan(double[:, ::1] pts, double[:, ::1] normals, double[::1] phi):
    """Minimum over ordered pairs i != j of phi_i |p_j - p_i|^2 + 2 <p_j - p_i, n_i>."""
    cdef Py_ssize_t n = pts.shape[0], dim = pts.shape[1]
    cdef Py_ssize_t i, j, k, bi = -1, bj = -1
    cdef double best = INFINITY, z, sq, dot, diff
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            sq = 0.0
            dot = 0.0
            for k in range(dim):
                diff = pts[j, k] - pts[i, k]
                sq += diff * diff
                dot += diff * normals[i, k]
            z = phi[i] * sq + 2.0 * dot
            if z < best:
                best = z
                bi = i
                bj = j
    return best, bi, bj


def max_pair_distance(double[:, ::1] pts):
    """Largest Euclidean distance between two rows."""
    cdef Py_ssize_t n = pts.shape[0], dim = pts.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double best = 0.0, sq, diff
    for i in range(n):
        for j in range(i + 1, n):
            sq = 0.0
            for k in range(dim):
                diff = pts[j, k] - pts[i, k]
                sq += diff * diff
            if sq > best:
                best = sq
    return sqrt(best)
