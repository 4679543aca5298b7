"""Incremental marginal-likelihood evaluation for single-block updates.

The sampler changes one additive covariance component at a time.  Each
component contributes ``outer(w, w) kron C_m`` with a fixed realization
weight vector w and an n x n kernel matrix C_m, so a proposal perturbs the
Sn x Sn covariance by ``Delta = U dC U^T`` with ``U = w kron I_n`` of rank
at most n.  With P the maintained inverse, ``G = U^T P U`` and
``u = U^T P y``:

* ``log|Sigma + Delta| = log|Sigma| + log det(I + G dC)``
* ``y^T (Sigma + Delta)^{-1} y = y^T P y - u^T dC (I + G dC)^{-1} u``
* on acceptance, ``P -= (P U) [dC (I + G dC)^{-1}] (P U)^T``.

G and P U are weighted sums of blocks of P, never requiring a new
factorization; only the nugget block (a full-diagonal shift) and the
once-per-iteration :meth:`refresh` anchor pay for a Cholesky.  ``refresh``
recomputes everything from the maintained Sigma, so floating-point drift
cannot accumulate across iterations, and :meth:`rebuild` reassembles Sigma
itself from the kernel matrices as a periodic guard.

All values match the direct path
(:func:`fgpreg.model.log_marginal_likelihood`) to machine precision scaled
by the condition number; the sampler tests pin this equivalence.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular
from scipy.linalg.lapack import dpotrf

from . import _backend
from .errors import NumericalError
from .linalg import DEFAULT_JITTER_REL, DEFAULT_RETRIES, chol_inverse, chol_logdet
from .model import LOG_2PI, component_blocks


class LikelihoodEngine:
    """Stateful evaluator of the marginal log likelihood for one chain.

    Parameters
    ----------
    data : Dataset
    basis : TensorBasis or (S, K) array or None
    state : ParamState
        Starting parameter values.
    include_likelihood : bool
        When False every likelihood value is 0, leaving the prior as the
        MH target (used for prior-recovery checks).
    """

    def __init__(self, data, basis, state, include_likelihood=True):
        self.data = data
        self.basis = basis
        self.include_likelihood = include_likelihood
        self._n = data.n
        self._S = data.S
        self._sn = data.S * data.n
        self._y = data.Y
        self._dist = None
        self.set_state(state)

    # -- state management ---------------------------------------------------

    def set_state(self, state):
        """Rebuild all kernel matrices and Sigma for ``state``, then anchor."""
        self.state = state
        if not self.include_likelihood:
            return
        self._weights, self._blocks = component_blocks(self.data, self.basis, state)
        if self._weights.shape[0]:
            self._sigma = _backend.assemble_blocks(
                self._weights, self._blocks, state.nugget
            )
        else:
            self._sigma = state.nugget * np.eye(self._sn)
        self._dirty = True
        self.refresh()

    def rebuild(self):
        """Reassemble Sigma from the per-block kernel matrices (drift guard)."""
        self.set_state(self.state)

    def refresh(self):
        """Recompute factorization, inverse, logdet and solves from Sigma."""
        if not self.include_likelihood:
            return
        chol = self._chol_of(self._sigma, permanent_jitter=True)
        self._logdet = chol_logdet(chol)
        c = solve_triangular(chol, self._y, lower=True, check_finite=False)
        self._quad = float(c @ c)
        self._alpha = solve_triangular(chol, c, lower=True, trans="T",
                                       check_finite=False)
        self._inv = chol_inverse(chol)
        self._dirty = False

    def _chol_of(self, sigma, permanent_jitter=False):
        """Lower Cholesky factor with jitter escalation.

        When escalation is needed for the maintained Sigma, the jitter is
        folded into Sigma itself so later incremental updates stay
        consistent with the returned factor.
        """
        work = sigma.copy()
        chol, info = dpotrf(work, lower=1, clean=1, overwrite_a=1)
        if info == 0:
            return chol
        scale = max(float(np.mean(np.diag(sigma))), 1.0)
        jitter = DEFAULT_JITTER_REL * scale
        for _ in range(DEFAULT_RETRIES):
            work = sigma + jitter * np.eye(sigma.shape[0])
            chol, info = dpotrf(work, lower=1, clean=1, overwrite_a=1)
            if info == 0:
                if permanent_jitter and sigma is self._sigma:
                    self._sigma.flat[:: self._sn + 1] += jitter
                return chol
            jitter *= 10.0
        raise NumericalError(
            f"Cholesky failed after {DEFAULT_RETRIES} jitter escalations",
            state=self.state,
        )

    # -- queries --------------------------------------------------------------

    def loglik(self):
        if not self.include_likelihood:
            return 0.0
        return -0.5 * (self._quad + self._logdet + self._sn * LOG_2PI)

    def direct_loglik(self):
        """From-scratch evaluation (testing aid, bypasses all caching)."""
        from .model import log_marginal_likelihood

        return log_marginal_likelihood(self.data, self.basis, self.state)

    # -- kernel-block proposals ------------------------------------------------

    def _block_matrix(self, block_index, params):
        """Kernel matrix of one component at the given parameters."""
        if self._dist is None:
            self._dist = _backend.pairwise_distances(
                self.data.locations.points, self.data.locations.points
            )
        c = _backend.matern_from_dist(self._dist, params.variance, params.decay,
                                      params.smoothness)
        np.fill_diagonal(c, params.variance)
        if block_index < self.state.q:
            xj = self.data.X[:, block_index]
            c = xj[:, None] * c * xj[None, :]
        return c

    def _u_vector(self, w):
        return (self._alpha.reshape(self._S, self._n) * w[:, None]).sum(axis=0)

    def propose_kernel_block(self, block_index, params):
        """Log likelihood if component ``block_index`` had ``params``.

        Returns ``(loglik, payload)``; hand the payload to
        :meth:`accept_kernel_block` to commit without recomputation.
        """
        if not self.include_likelihood:
            return 0.0, None
        if self._dirty:
            self.refresh()
        w = self._weights[block_index]
        c_new = self._block_matrix(block_index, params)
        delta = c_new - self._blocks[block_index]
        if not np.any(w):
            # component invisible to the data: likelihood unchanged
            return self.loglik(), ("zero", c_new)
        g = _backend.block_collapse(self._inv, w, self._n)
        a = g @ delta
        a.flat[:: self._n + 1] += 1.0
        try:
            lu, piv = lu_factor(a, check_finite=False)
        except Exception as exc:
            raise NumericalError(f"update system not factorizable: {exc}",
                                 state=self.state) from exc
        diag = np.diag(lu)
        if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
            raise NumericalError("singular update system", state=self.state)
        swaps = int(np.sum(piv != np.arange(self._n)))
        sign = (-1.0) ** swaps * (1.0 if np.sum(diag < 0.0) % 2 == 0 else -1.0)
        if sign <= 0.0:
            raise NumericalError("proposed covariance not positive definite",
                                 state=self.state)
        dlogdet = float(np.sum(np.log(np.abs(diag))))
        u = self._u_vector(w)
        dx = delta @ lu_solve((lu, piv), u, check_finite=False)
        quad_new = self._quad - float(u @ dx)
        logdet_new = self._logdet + dlogdet
        loglik = -0.5 * (quad_new + logdet_new + self._sn * LOG_2PI)
        if not np.isfinite(loglik):
            raise NumericalError("non-finite log likelihood", state=self.state)
        payload = ("rank", c_new, delta, lu, piv, dx, quad_new, logdet_new)
        return loglik, payload

    def accept_kernel_block(self, block_index, new_state, payload):
        """Commit a previously proposed kernel-block change."""
        self.state = new_state
        if not self.include_likelihood:
            return
        if payload[0] == "zero":
            self._blocks[block_index] = payload[1]
            return
        _, c_new, delta, lu, piv, dx, quad_new, logdet_new = payload
        w = self._weights[block_index]
        # Mid = dC (I + G dC)^{-1}, symmetric up to roundoff
        mid = lu_solve((lu, piv), delta.T, trans=1, check_finite=False).T
        mid = 0.5 * (mid + mid.T)
        t = _backend.col_collapse(self._inv, w, self._n)
        self._inv -= (t @ mid) @ t.T
        self._alpha -= t @ dx
        self._quad = quad_new
        self._logdet = logdet_new
        self._blocks[block_index] = c_new
        _backend.block_add(self._sigma, w, delta)

    # -- nugget proposals ---------------------------------------------------------

    def propose_nugget(self, nugget):
        """Log likelihood with the nugget set to ``nugget`` (full refactor)."""
        if not self.include_likelihood:
            return 0.0, None
        dtau = nugget - self.state.nugget
        work = self._sigma.copy()
        work.flat[:: self._sn + 1] += dtau
        chol = self._chol_of(work)
        logdet_new = chol_logdet(chol)
        c = solve_triangular(chol, self._y, lower=True, check_finite=False)
        quad_new = float(c @ c)
        loglik = -0.5 * (quad_new + logdet_new + self._sn * LOG_2PI)
        if not np.isfinite(loglik):
            raise NumericalError("non-finite log likelihood", state=self.state)
        return loglik, (dtau, quad_new, logdet_new)

    def accept_nugget(self, new_state, payload):
        self.state = new_state
        if not self.include_likelihood:
            return
        dtau, quad_new, logdet_new = payload
        self._sigma.flat[:: self._sn + 1] += dtau
        self._quad = quad_new
        self._logdet = logdet_new
        self._dirty = True
