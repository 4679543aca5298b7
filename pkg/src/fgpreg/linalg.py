"""Cholesky helpers with diagonal-jitter escalation.

Covariance matrices here are positive definite in exact arithmetic but may
fail to factor once eigenvalues approach float precision (coincident
locations, tiny nuggets).  Factorizations first run on the matrix as given;
on failure a diagonal jitter of ``rel * mean(diag)`` is added and escalated
tenfold for a fixed number of retries.
"""

import numpy as np
from scipy.linalg import lapack

from .errors import NumericalError

DEFAULT_JITTER_REL = 1e-8
DEFAULT_RETRIES = 3


def cholesky_lower(a, base_jitter=0.0, jitter_rel=DEFAULT_JITTER_REL,
                   retries=DEFAULT_RETRIES, state=None):
    """Lower Cholesky factor of ``a`` with jitter escalation.

    Returns ``(L, jitter_used)``.  ``a`` is not modified.  Raises
    :class:`NumericalError` if the factorization still fails after
    ``retries`` escalations.
    """
    scale = float(np.mean(np.diag(a)))
    if not np.isfinite(scale):
        raise NumericalError("non-finite covariance diagonal", state=state)
    jitter = float(base_jitter)
    for attempt in range(retries + 1):
        if jitter > 0.0:
            work = a + jitter * np.eye(a.shape[0])
        else:
            work = a.copy()
        c, info = lapack.dpotrf(work, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return c, jitter
        jitter = jitter_rel * max(scale, 1.0) if jitter == 0.0 else jitter * 10.0
        if attempt == retries:
            break
    raise NumericalError(
        f"Cholesky failed after {retries} jitter escalations (last jitter {jitter:g})",
        state=state,
    )


def chol_logdet(chol):
    """log|A| from a lower Cholesky factor of A."""
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def chol_inverse(chol):
    """Full symmetric inverse from a lower Cholesky factor (dpotri + mirror)."""
    inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise NumericalError(f"dpotri failed with info={info}")
    from ._backend import symmetrize_lower

    return symmetrize_lower(np.ascontiguousarray(inv))
