# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled covariance hot kernels.

Mirrors the API and block conventions of ``fgpreg._core_py``.  The Matern
routines share one inline correlation function, so scalar and matrix
evaluations of the same kernel agree bit for bit within this backend.
The collapse helpers delegate to NumPy: they reduce to BLAS contractions
that already run at memory bandwidth.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

from . import _core_py

BACKEND_NAME = "cython"

cdef double SQRT3 = sqrt(3.0)
cdef double SQRT5 = sqrt(5.0)


cdef inline double _corr(double t, int family) noexcept nogil:
    cdef double a
    if family == 0:
        return exp(-t)
    if family == 1:
        a = SQRT3 * t
        return (1.0 + a) * exp(-a)
    a = SQRT5 * t
    return (1.0 + a + (a * a) / 3.0) * exp(-a)


cdef int _family(double smoothness) except -1:
    if smoothness == 0.5:
        return 0
    if smoothness == 1.5:
        return 1
    if smoothness == 2.5:
        return 2
    raise ValueError(f"unsupported smoothness {smoothness!r}")


def matern_from_dist(dist, double variance, double decay, smoothness, out=None):
    """Half-integer Matern covariance on precomputed distances."""
    cdef int family = _family(float(smoothness))
    arr = np.ascontiguousarray(dist, dtype=np.float64)
    shape = arr.shape
    flat_in = arr.reshape(-1)
    if out is None:
        result = np.empty_like(arr)
    else:
        result = out
    flat_out = result.reshape(-1)
    cdef const double[::1] src = flat_in
    cdef double[::1] dst = flat_out
    cdef Py_ssize_t i, size = src.shape[0]
    with nogil:
        for i in range(size):
            dst[i] = variance * _corr(decay * src[i], family)
    return result


def pairwise_distances(a, b):
    """Euclidean distance matrix between (n, 2) coordinate arrays."""
    cdef const double[:, ::1] pa = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] pb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = pa.shape[0], nb = pb.shape[0], i, j
    cdef double dx, dy
    result = np.empty((na, nb))
    cdef double[:, ::1] dst = result
    with nogil:
        for i in range(na):
            for j in range(nb):
                dx = pa[i, 0] - pb[j, 0]
                dy = pa[i, 1] - pb[j, 1]
                dst[i, j] = sqrt(dx * dx + dy * dy)
    return result


def matern_pairwise(a, b, double variance, double decay, smoothness):
    """Fused distance + Matern evaluation between coordinate arrays."""
    cdef int family = _family(float(smoothness))
    cdef const double[:, ::1] pa = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] pb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = pa.shape[0], nb = pb.shape[0], i, j
    cdef double dx, dy
    result = np.empty((na, nb))
    cdef double[:, ::1] dst = result
    with nogil:
        for i in range(na):
            for j in range(nb):
                dx = pa[i, 0] - pb[j, 0]
                dy = pa[i, 1] - pb[j, 1]
                dst[i, j] = variance * _corr(decay * sqrt(dx * dx + dy * dy), family)
    return result


# Full assembly reduces to one matrix product over stacked blocks; BLAS
# beats any fused loop there, so both backends share the NumPy path.
def assemble_blocks(weights, blocks, double nugget, out=None):
    return _core_py.assemble_blocks(weights, blocks, nugget, out)


def assemble_cross(row_weights, col_weights, blocks):
    return _core_py.assemble_cross(row_weights, col_weights, blocks)


def block_add(sigma, w_vec, delta):
    """In place ``sigma += outer(w, w) kron delta``."""
    cdef double[:, ::1] dst = sigma
    cdef const double[::1] w = np.ascontiguousarray(w_vec, dtype=np.float64)
    cdef const double[:, ::1] d = np.ascontiguousarray(delta, dtype=np.float64)
    cdef Py_ssize_t s_count = w.shape[0], n = d.shape[0]
    cdef Py_ssize_t s, t, i, j, row0, col0
    cdef double coeff
    with nogil:
        for s in range(s_count):
            if w[s] == 0.0:
                continue
            for t in range(s_count):
                coeff = w[s] * w[t]
                if coeff == 0.0:
                    continue
                row0 = s * n
                col0 = t * n
                for i in range(n):
                    for j in range(n):
                        dst[row0 + i, col0 + j] += coeff * d[i, j]
    return None


def block_collapse(mat, w, n):
    # BLAS-bound contraction; NumPy tensordot already streams at bandwidth
    return _core_py.block_collapse(mat, w, n)


def col_collapse(mat, w, n):
    return _core_py.col_collapse(mat, w, n)


def symmetrize_lower(a):
    """Copy the lower triangle of square ``a`` onto the upper, in place."""
    cdef double[:, ::1] m = a
    cdef Py_ssize_t n = m.shape[0], i, j
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                m[i, j] = m[j, i]
    return a
