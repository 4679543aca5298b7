"""Structured prior covariance of the stacked response, likelihood, priors.

The observed data are S functional realizations over a shared set of n
locations, stacked realization-major into a single vector Y of length S*n:
all locations of realization 1, then realization 2, and so on.  Every
consumer of Y relies on that layout.

The prior covariance of Y decomposes additively:

* a functional-predictor part, shared across realizations: ``J_S kron C_beta``
  with ``C_beta[i,i'] = sum_j x_j(u_i) C_bj(u_i, u_i') x_j(u_i')`` and J_S the
  S x S matrix of ones;
* a global-predictor part with (s, s') block
  ``sum_k B_k(z_s) C_k B_k(z_s')`` built from the basis expansion of the
  per-location effect functions;
* independent observation noise ``tau^2 I``.

Both structured parts are sums of terms ``outer(w, w) kron C`` with a
realization-side weight vector w and a location-side kernel matrix C; the
assembly helpers and the MCMC engine exploit exactly that shape.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import _backend
from .basis import TensorBasis, basis_matrix
from .errors import InvalidInputError
from .kernels import KernelParams, LocationSet, cov_matrix, distance_matrix
from .linalg import chol_logdet, cholesky_lower

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Dataset:
    """Training data; the single source of the problem dimensions.

    Attributes
    ----------
    locations : LocationSet
        The n observation sites, shared by all realizations.
    X : (n, q) array
        Functional-predictor values at the locations; by convention the
        first column is an all-ones intercept.
    Z : (S, p) array
        Global predictors, one row per realization.
    Y : (S*n,) array
        Stacked response, realization-major.
    """

    locations: LocationSet
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if not isinstance(self.locations, LocationSet):
            self.locations = LocationSet(self.locations)
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.Z = np.ascontiguousarray(self.Z, dtype=np.float64)
        self.Y = np.ascontiguousarray(self.Y, dtype=np.float64).reshape(-1)
        n = len(self.locations)
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise InvalidInputError(f"X must be (n={n}, q), got {self.X.shape}")
        if self.Z.ndim != 2:
            raise InvalidInputError(f"Z must be (S, p), got {self.Z.shape}")
        if self.Y.shape[0] != self.S * n:
            raise InvalidInputError(
                f"Y has length {self.Y.shape[0]}, expected S*n = {self.S * n}"
            )
        for name, arr in (("X", self.X), ("Z", self.Z), ("Y", self.Y)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")

    @property
    def n(self):
        return len(self.locations)

    @property
    def S(self):
        return self.Z.shape[0]

    @property
    def q(self):
        return self.X.shape[1]

    @property
    def p(self):
        return self.Z.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Fixed model configuration: basis, smoothness values and priors.

    Variances and the nugget get Inverse-Gamma(shape, scale) priors; decay
    rates share a Uniform(decay_min, decay_max) prior.  Smoothness is fixed,
    not sampled.
    """

    basis: TensorBasis
    nu_beta: float = 0.5
    nu_eta: float = 0.5
    prior_variance: tuple = (2.0, 1.0)
    prior_nugget: tuple = (2.0, 1.0)
    prior_decay: tuple = (1e-3, 10.0)

    def __post_init__(self):
        a_s, b_s = self.prior_variance
        a_t, b_t = self.prior_nugget
        lo, hi = self.prior_decay
        if min(a_s, b_s, a_t, b_t) <= 0.0:
            raise InvalidInputError("Inverse-Gamma shape/scale must be positive")
        if not (0.0 < lo < hi):
            raise InvalidInputError(f"decay support must satisfy 0 < lo < hi, got ({lo}, {hi})")

    @property
    def K(self):
        return self.basis.K if self.basis is not None else 0


@dataclass(frozen=True)
class ParamState:
    """All sampled parameters: q + K kernels plus the nugget variance."""

    beta_kernels: tuple
    eta_kernels: tuple
    nugget: float

    def __post_init__(self):
        object.__setattr__(self, "beta_kernels", tuple(self.beta_kernels))
        object.__setattr__(self, "eta_kernels", tuple(self.eta_kernels))
        for k in self.beta_kernels + self.eta_kernels:
            if not isinstance(k, KernelParams):
                raise InvalidInputError("kernel entries must be KernelParams")
        if not (np.isfinite(self.nugget) and self.nugget > 0.0):
            raise InvalidInputError(f"nugget must be positive, got {self.nugget!r}")

    @property
    def q(self):
        return len(self.beta_kernels)

    @property
    def K(self):
        return len(self.eta_kernels)


def default_decay_support(locations, factor=3.0):
    """Uniform decay support (factor/d_max, factor/d_min) from the data.

    d_min and d_max are the smallest and largest nonzero pairwise distances,
    so the kernel's effective range can span anything from the closest pair
    to the full domain diameter.
    """
    d = distance_matrix(locations)
    pos = d[d > 0.0]
    if pos.size == 0:
        raise InvalidInputError("need at least two distinct locations")
    return (factor / float(pos.max()), factor / float(pos.min()))


def _basis_values(basis, Z):
    """Basis values for each realization: accepts a TensorBasis or a
    precomputed (S, K) array (e.g. an identity basis for linear effects)."""
    if basis is None:
        return np.zeros((Z.shape[0], 0))
    if isinstance(basis, TensorBasis):
        return basis_matrix(basis, Z)
    bmat = np.ascontiguousarray(basis, dtype=np.float64)
    if bmat.ndim != 2 or bmat.shape[0] != Z.shape[0]:
        raise InvalidInputError(f"basis values must be (S={Z.shape[0]}, K), got {bmat.shape}")
    return bmat


def component_blocks(data, basis, state):
    """The (weights, kernel matrices) pairs whose kron-sum is the prior
    covariance of Y (noise excluded).

    Returns ``(W, C)`` with W of shape (q+K, S) and C of shape (q+K, n, n):
    the j-th functional-predictor term has weights 1 and kernel matrix
    ``diag(x_j) K_j diag(x_j)``; the k-th basis term has weights B_k(z_s)
    and the plain kernel matrix of eta_k.
    """
    n, s = data.n, data.S
    bmat = _basis_values(basis, data.Z)
    if bmat.shape[1] != state.K:
        raise InvalidInputError(
            f"basis has {bmat.shape[1]} components but state has {state.K} eta kernels"
        )
    if data.q != state.q:
        raise InvalidInputError(f"X has {data.q} columns but state has {state.q} beta kernels")
    m = state.q + state.K
    weights = np.empty((m, s))
    blocks = np.empty((m, n, n))
    for j, params in enumerate(state.beta_kernels):
        weights[j] = 1.0
        xj = data.X[:, j]
        blocks[j] = xj[:, None] * cov_matrix(data.locations, params) * xj[None, :]
    for k, params in enumerate(state.eta_kernels):
        weights[state.q + k] = bmat[:, k]
        blocks[state.q + k] = cov_matrix(data.locations, params)
    return weights, blocks


def assemble_c_beta(data, state):
    """The n x n functional-predictor covariance shared by all realizations:
    entry (i, i') is ``sum_j x_j(u_i) C_bj(u_i, u_i') x_j(u_i')``."""
    if data.q != state.q:
        raise InvalidInputError(f"X has {data.q} columns but state has {state.q} beta kernels")
    n = data.n
    out = np.zeros((n, n))
    for j, params in enumerate(state.beta_kernels):
        xj = data.X[:, j]
        out += xj[:, None] * cov_matrix(data.locations, params) * xj[None, :]
    return out


def assemble_sigma_z(data, basis, state):
    """The Sn x Sn global-predictor covariance: block (s, s') equals
    ``sum_k B_k(z_s) C_k B_k(z_s')``.

    ``basis`` may be a TensorBasis or a precomputed (S, K) matrix of basis
    values; with identity values ``B_k(z) = z_k`` this is the covariance of
    a spatially-varying coefficient model in the global predictors.
    """
    bmat = _basis_values(basis, data.Z)
    if bmat.shape[1] != state.K:
        raise InvalidInputError(
            f"basis has {bmat.shape[1]} components but state has {state.K} eta kernels"
        )
    n, s = data.n, data.S
    if state.K == 0:
        return np.zeros((s * n, s * n))
    weights = np.ascontiguousarray(bmat.T)
    blocks = np.empty((state.K, n, n))
    for k, params in enumerate(state.eta_kernels):
        blocks[k] = cov_matrix(data.locations, params)
    return _backend.assemble_blocks(weights, blocks, 0.0)


def assemble_sigma_y(data, basis, state):
    """Full prior covariance of the stacked response:
    ``J_S kron C_beta + Sigma_Z + nugget * I``.

    Exact assembly with no jitter; factorization helpers add jitter only on
    Cholesky failure.
    """
    weights, blocks = component_blocks(data, basis, state)
    if weights.shape[0] == 0:
        sn = data.S * data.n
        return state.nugget * np.eye(sn)
    return _backend.assemble_blocks(weights, blocks, state.nugget)


@dataclass(frozen=True)
class ObsPoint:
    """One (realization, location) coordinate for pointwise covariance.

    ``x_values`` are the functional-predictor values at the location (the
    caller supplies them for off-grid points; no interpolation happens
    here), and ``basis_values`` is the K-vector of basis functions at the
    realization's global predictors.  ``realization`` is an arbitrary
    hashable identity label: the nugget applies only when both labels and
    locations coincide.
    """

    realization: object
    location: tuple
    x_values: np.ndarray = field(default_factory=lambda: np.ones(1))
    basis_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def prior_cov_pair(point_a, point_b, state):
    """Prior covariance between two observations at arbitrary points.

    Implements the pointwise form of the model covariance:
    ``sum_j x_j(u) C_bj(u, u') x_j(u') + sum_k B_k(z_s) C_k(u, u') B_k(z_s')``
    plus the nugget when the two observations are identical.
    """
    from .kernels import matern_cov

    u = np.asarray(point_a.location, dtype=np.float64)
    v = np.asarray(point_b.location, dtype=np.float64)
    xa = np.asarray(point_a.x_values, dtype=np.float64)
    xb = np.asarray(point_b.x_values, dtype=np.float64)
    ba = np.asarray(point_a.basis_values, dtype=np.float64)
    bb = np.asarray(point_b.basis_values, dtype=np.float64)
    if xa.shape[0] != state.q or xb.shape[0] != state.q:
        raise InvalidInputError("x_values length must match the number of beta kernels")
    if ba.shape[0] != state.K or bb.shape[0] != state.K:
        raise InvalidInputError("basis_values length must match the number of eta kernels")
    total = 0.0
    for j, params in enumerate(state.beta_kernels):
        total += xa[j] * matern_cov(u, v, params) * xb[j]
    for k, params in enumerate(state.eta_kernels):
        total += ba[k] * matern_cov(u, v, params) * bb[k]
    if point_a.realization == point_b.realization and np.array_equal(u, v):
        total += state.nugget
    return total


def log_marginal_likelihood(data, basis, state):
    """Log density of Y under the mean-zero Gaussian with the assembled
    covariance, computed through a Cholesky factorization."""
    sigma = assemble_sigma_y(data, basis, state)
    chol, _ = cholesky_lower(sigma, state=state)
    half_solve = solve_triangular(chol, data.Y, lower=True, check_finite=False)
    quad = float(half_solve @ half_solve)
    return -0.5 * (quad + chol_logdet(chol) + data.Y.shape[0] * LOG_2PI)


def log_inverse_gamma(x, shape, scale):
    """Inverse-Gamma log density; -inf outside the positive support."""
    if x <= 0.0:
        return -math.inf
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_uniform(x, lo, hi):
    return -math.log(hi - lo) if lo < x < hi else -math.inf


def log_prior_kernel(params, spec):
    """Log prior of one kernel's (variance, decay); smoothness is fixed."""
    a, b = spec.prior_variance
    lo, hi = spec.prior_decay
    return log_inverse_gamma(params.variance, a, b) + log_uniform(params.decay, lo, hi)


def log_prior_nugget(nugget, spec):
    a, b = spec.prior_nugget
    return log_inverse_gamma(nugget, a, b)


def log_prior(state, spec):
    """Sum of the log prior densities over all sampled parameters; -inf
    whenever any decay sits outside its Uniform support."""
    total = 0.0
    for params in state.beta_kernels + state.eta_kernels:
        total += log_prior_kernel(params, spec)
    total += log_prior_nugget(state.nugget, spec)
    return total
