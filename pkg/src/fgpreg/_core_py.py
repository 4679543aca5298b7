"""NumPy implementations of the covariance hot kernels.

This module is the fallback backend; `fgpreg._core` (compiled) provides the
same functions with fused loops.  Both operate on C-contiguous float64
arrays and must agree entrywise to ~1e-12.  The block layout convention is
realization-major: an (S*n, S*n) matrix is addressed as blocks
``M[s*n:(s+1)*n, t*n:(t+1)*n]``.
"""

import numpy as np

BACKEND_NAME = "numpy"

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


def matern_from_dist(dist, variance, decay, smoothness, out=None):
    """Half-integer Matern covariance evaluated on precomputed distances.

    ``dist`` may have any shape; returns ``variance * m_nu(decay * dist)``
    with the closed-form correlation for smoothness 0.5, 1.5 or 2.5.
    """
    t = np.multiply(dist, decay, out=out)
    if smoothness == 0.5:
        np.exp(np.negative(t, out=t), out=t)
        t *= variance
        return t
    if smoothness == 1.5:
        a = _SQRT3 * t
        poly = 1.0 + a
    elif smoothness == 2.5:
        a = _SQRT5 * t
        poly = 1.0 + a + (a * a) / 3.0
    else:
        raise ValueError(f"unsupported smoothness {smoothness!r}")
    np.exp(np.negative(a, out=a), out=a)
    a *= poly
    a *= variance
    if out is not None and a is not out:
        np.copyto(out, a)
        return out
    return a


def pairwise_distances(a, b):
    """Euclidean distance matrix between two (n, 2) coordinate arrays."""
    dx = a[:, 0, None] - b[None, :, 0]
    dy = a[:, 1, None] - b[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def matern_pairwise(a, b, variance, decay, smoothness):
    """Matern covariance matrix between coordinate arrays ``a`` and ``b``."""
    return matern_from_dist(pairwise_distances(a, b), variance, decay, smoothness)


def assemble_blocks(weights, blocks, nugget, out=None):
    """Assemble ``sum_m outer(w_m, w_m) kron C_m + nugget * I``.

    Parameters
    ----------
    weights : (M, S) array
        Realization-side weight vector of each additive component.
    blocks : (M, n, n) array
        Location-side covariance matrix of each component.
    nugget : float
        Added to the diagonal.
    """
    m, s = weights.shape
    n = blocks.shape[1]
    wouter = np.einsum("ms,mt->mst", weights, weights).reshape(m, s * s)
    flat = wouter.T @ blocks.reshape(m, n * n)
    sigma = np.ascontiguousarray(
        flat.reshape(s, s, n, n).transpose(0, 2, 1, 3).reshape(s * n, s * n)
    )
    if nugget:
        sigma[np.diag_indices_from(sigma)] += nugget
    if out is not None:
        np.copyto(out, sigma)
        return out
    return sigma


def assemble_cross(row_weights, col_weights, blocks):
    """Assemble the cross-covariance ``sum_m outer(r_m, w_m) kron C_m``.

    ``row_weights`` is (M, S_row), ``col_weights`` is (M, S_col) and
    ``blocks`` is (M, n_row, n_col); the result is
    (S_row*n_row, S_col*n_col).
    """
    m, sr = row_weights.shape
    sc = col_weights.shape[1]
    nr, nc = blocks.shape[1], blocks.shape[2]
    wouter = np.einsum("ma,mb->mab", row_weights, col_weights).reshape(m, sr * sc)
    flat = wouter.T @ blocks.reshape(m, nr * nc)
    return np.ascontiguousarray(
        flat.reshape(sr, sc, nr, nc).transpose(0, 2, 1, 3).reshape(sr * nr, sc * nc)
    )


def block_add(sigma, w, delta):
    """In place ``sigma += outer(w, w) kron delta`` (sigma is (S*n, S*n))."""
    s = w.shape[0]
    n = delta.shape[0]
    view = sigma.reshape(s, n, s, n)
    for i in range(s):
        wi = w[i]
        if wi == 0.0:
            continue
        for j in range(s):
            c = wi * w[j]
            if c != 0.0:
                view[i, :, j, :] += c * delta


def block_collapse(mat, w, n):
    """Return G with ``G[i, j] = sum_{s,t} w_s w_t mat[s*n+i, t*n+j]``."""
    s = w.shape[0]
    view = mat.reshape(s, n, s, n)
    tmp = np.tensordot(w, view, axes=(0, 0))  # (n, s, n)
    return np.tensordot(w, tmp, axes=(0, 1))  # (n, n)


def col_collapse(mat, w, n):
    """Return T (rows of ``mat``, n cols) with ``T[:, j] = sum_s w_s mat[:, s*n+j]``."""
    rows = mat.shape[0]
    s = w.shape[0]
    view = mat.reshape(rows, s, n)
    return np.tensordot(view, w, axes=(1, 0))


def symmetrize_lower(a):
    """Copy the lower triangle of square ``a`` onto the upper, in place."""
    lower = np.tril(a)
    strict_upper = np.tril(a, -1).T
    np.copyto(a, lower)
    a += strict_upper
    return a
