"""Posterior prediction at new (realization, location) points.

Test observations are treated as jointly Gaussian with the training stack
under the model covariance; conditioning gives per-draw predictive moments,
and the posterior predictive mixes those over retained MCMC draws.
Predictions target noisy observations: the nugget enters the predictive
variance (coverage is evaluated against observed test responses), while
:func:`latent_surfaces` recovers the noise-free coefficient fields.

Functional-predictor values at test locations must be supplied by the
caller; they are fixed across realizations but location-specific, and no
spatial interpolation is attempted here.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from . import _backend
from .errors import InvalidInputError
from .kernels import LocationSet
from .linalg import cholesky_lower
from .model import _basis_values, component_blocks

VAR_FLOOR = 1e-30


@dataclass
class TestSet:
    """Held-out realizations and locations.

    ``X_test`` carries the functional-predictor values at the test
    locations (same columns as training X); ``Z_test`` the global
    predictors of the test realizations.  ``Y_test``, when present, is the
    stacked observed response in realization-major order, used only for
    evaluation.
    """

    __test__ = False  # not a pytest class

    locations: LocationSet
    X_test: np.ndarray
    Z_test: np.ndarray
    Y_test: Optional[np.ndarray] = None

    def __post_init__(self):
        if not isinstance(self.locations, LocationSet):
            self.locations = LocationSet(self.locations)
        self.X_test = np.ascontiguousarray(self.X_test, dtype=np.float64)
        self.Z_test = np.ascontiguousarray(self.Z_test, dtype=np.float64)
        n = len(self.locations)
        if self.X_test.ndim != 2 or self.X_test.shape[0] != n:
            raise InvalidInputError(f"X_test must be (n_test={n}, q), got {self.X_test.shape}")
        if self.Z_test.ndim != 2:
            raise InvalidInputError(f"Z_test must be (S_test, p), got {self.Z_test.shape}")
        if self.Y_test is not None:
            self.Y_test = np.ascontiguousarray(self.Y_test, dtype=np.float64).reshape(-1)
            if self.Y_test.shape[0] != self.S_test * n:
                raise InvalidInputError("Y_test length must equal S_test * n_test")

    @property
    def n_test(self):
        return len(self.locations)

    @property
    def S_test(self):
        return self.Z_test.shape[0]

    @property
    def n_points(self):
        return self.S_test * self.n_test


@dataclass
class PredictionResult:
    """Pointwise predictive summaries, realization-major like Y."""

    mean: np.ndarray
    sd: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray

    def __post_init__(self):
        for name in ("mean", "sd", "lower95", "upper95"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        if not np.all(self.sd > 0.0):
            raise InvalidInputError("predictive sd must be positive")
        if np.any(self.lower95 > self.upper95):
            raise InvalidInputError("interval bounds out of order")


def _cross_components(draw, data, basis, test_locations, x_test, z_test):
    """Weights and kernel blocks for the test-versus-train covariance."""
    bmat_train = _basis_values(basis, data.Z)
    bmat_test = _basis_values(basis, z_test)
    dist = _backend.pairwise_distances(test_locations.points, data.locations.points)
    m = draw.q + draw.K
    s_test = z_test.shape[0]
    row_w = np.empty((m, s_test))
    col_w = np.empty((m, data.S))
    blocks = np.empty((m, len(test_locations), data.n))
    for j, params in enumerate(draw.beta_kernels):
        row_w[j] = 1.0
        col_w[j] = 1.0
        k = _backend.matern_from_dist(dist, params.variance, params.decay,
                                      params.smoothness)
        blocks[j] = x_test[:, j][:, None] * k * data.X[:, j][None, :]
    for k_idx, params in enumerate(draw.eta_kernels):
        row_w[draw.q + k_idx] = bmat_test[:, k_idx]
        col_w[draw.q + k_idx] = bmat_train[:, k_idx]
        blocks[draw.q + k_idx] = _backend.matern_from_dist(
            dist, params.variance, params.decay, params.smoothness
        )
    return row_w, col_w, blocks


def _prior_test_diag(draw, x_test, bmat_test):
    """Pointwise prior variance at test points, nugget included."""
    beta_var = np.array([p.variance for p in draw.beta_kernels])
    eta_var = np.array([p.variance for p in draw.eta_kernels])
    loc_part = (x_test**2) @ beta_var  # (n_test,)
    realization_part = (bmat_test**2) @ eta_var  # (S_test,)
    return (realization_part[:, None] + loc_part[None, :]).reshape(-1) + draw.nugget


def predictive_moments(draw, data, basis, test, chol=None):
    """Conditional mean and variance diagonal of the test stack given Y
    under one parameter draw.

    ``chol`` optionally reuses a Cholesky factor of the training covariance
    for this draw.  The variance diagonal includes the nugget (predictions
    are for noisy observations).
    """
    from .model import assemble_sigma_y

    if test.X_test.shape[1] != draw.q:
        raise InvalidInputError("X_test column count must match the draw's beta kernels")
    if chol is None:
        sigma = assemble_sigma_y(data, basis, draw)
        chol, _ = cholesky_lower(sigma, state=draw)
    row_w, col_w, blocks = _cross_components(
        draw, data, basis, test.locations, test.X_test, test.Z_test
    )
    if row_w.shape[0]:
        cross = _backend.assemble_cross(row_w, col_w, blocks)
    else:
        cross = np.zeros((test.n_points, data.S * data.n))
    half = solve_triangular(chol, data.Y, lower=True, check_finite=False)
    weights = solve_triangular(chol, cross.T, lower=True, check_finite=False)
    mean = weights.T @ half
    bmat_test = _basis_values(basis, test.Z_test)
    prior_diag = _prior_test_diag(draw, test.X_test, bmat_test)
    var = prior_diag - np.einsum("ij,ij->j", weights, weights)
    return mean, np.maximum(var, VAR_FLOOR)


def posterior_predictive(draws, data, basis, test, seed=0, n_deviates=1,
                         max_draws=None):
    """Monte Carlo mixture of per-draw predictive Gaussians.

    The final mean averages the per-draw means; the central 95% interval
    takes equal-tailed quantiles of ``n_deviates`` Gaussian deviates per
    draw per test point (deterministic given ``seed``); the sd is the exact
    mixture standard deviation.  ``max_draws`` caps the cost by taking an
    evenly spaced subsequence of the draws.
    """
    states = _draw_states(draws)
    if not states:
        raise InvalidInputError("need at least one retained draw")
    if max_draws is not None and len(states) > max_draws:
        idx = np.unique(np.linspace(0, len(states) - 1, max_draws).round().astype(int))
        states = [states[i] for i in idx]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    n_pts = test.n_points
    means = np.empty((len(states), n_pts))
    second = np.zeros(n_pts)
    samples = np.empty((len(states) * n_deviates, n_pts))
    for d, state in enumerate(states):
        mean_d, var_d = predictive_moments(state, data, basis, test)
        means[d] = mean_d
        second += var_d + mean_d**2
        sd_d = np.sqrt(var_d)
        row = d * n_deviates
        samples[row : row + n_deviates] = (
            mean_d[None, :] + sd_d[None, :] * rng.standard_normal((n_deviates, n_pts))
        )
    mean = means.mean(axis=0)
    mix_var = second / len(states) - mean**2
    sd = np.sqrt(np.maximum(mix_var, VAR_FLOOR))
    lower, upper = np.quantile(samples, [0.025, 0.975], axis=0)
    return PredictionResult(mean=mean, sd=sd, lower95=lower, upper95=upper)


def _draw_states(draws):
    from .inference import PosteriorDraws
    from .model import ParamState

    if isinstance(draws, PosteriorDraws):
        return list(draws.draws)
    if isinstance(draws, (list, tuple)):
        if draws and isinstance(draws[0], PosteriorDraws):
            return [d for c in draws for d in c.draws]
        if all(isinstance(d, ParamState) for d in draws):
            return list(draws)
    raise InvalidInputError("draws must be PosteriorDraws, a list of them, or ParamStates")


@dataclass
class LatentSurfaces:
    """Pointwise posterior summaries of the coefficient fields on a grid."""

    beta_mean: np.ndarray  # (q, n_grid)
    beta_sd: np.ndarray
    eta_mean: np.ndarray  # (K, n_grid)
    eta_sd: np.ndarray


def latent_surfaces(draw, data, basis, grid, chol=None):
    """Posterior means and pointwise sds of every coefficient surface.

    Treats the stacked latent vector (all beta_j at the grid, all eta_k at
    the grid) as jointly Gaussian with Y under the model and conditions on
    the observed stack.  The reconstruction
    ``x(u)^T beta_hat(u) + sum_k B_k(z_s) eta_hat_k(u)`` recovers the
    noise-free part of the predictive mean at on-grid points.
    """
    from .model import assemble_sigma_y

    if not isinstance(grid, LocationSet):
        grid = LocationSet(grid)
    if chol is None:
        sigma = assemble_sigma_y(data, basis, draw)
        chol, _ = cholesky_lower(sigma, state=draw)
    g = len(grid)
    n, s = data.n, data.S
    bmat_train = _basis_values(basis, data.Z)
    dist = _backend.pairwise_distances(grid.points, data.locations.points)
    half = solve_triangular(chol, data.Y, lower=True, check_finite=False)

    def condition(cross, prior_var):
        w = solve_triangular(chol, cross.T, lower=True, check_finite=False)
        mean = w.T @ half
        var = prior_var - np.einsum("ij,ij->j", w, w)
        return mean, np.sqrt(np.maximum(var, VAR_FLOOR))

    beta_mean = np.empty((draw.q, g))
    beta_sd = np.empty((draw.q, g))
    for j, params in enumerate(draw.beta_kernels):
        k = _backend.matern_from_dist(dist, params.variance, params.decay,
                                      params.smoothness)
        base = k * data.X[:, j][None, :]
        cross = np.tile(base, (1, s))
        beta_mean[j], beta_sd[j] = condition(cross, np.full(g, params.variance))
    eta_mean = np.empty((draw.K, g))
    eta_sd = np.empty((draw.K, g))
    for k_idx, params in enumerate(draw.eta_kernels):
        k = _backend.matern_from_dist(dist, params.variance, params.decay,
                                      params.smoothness)
        cross = np.kron(bmat_train[:, k_idx][None, :], k)
        eta_mean[k_idx], eta_sd[k_idx] = condition(cross, np.full(g, params.variance))
    return LatentSurfaces(beta_mean=beta_mean, beta_sd=beta_sd,
                          eta_mean=eta_mean, eta_sd=eta_sd)


def evaluate_metrics(pred, truth):
    """Predictive diagnostics against observed test responses.

    Returns root mean squared error, empirical coverage of the 95%
    intervals, their average length and the sample standard deviation of
    the truth vector (the scale predictions are judged against).
    """
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if truth.shape[0] != pred.mean.shape[0]:
        raise InvalidInputError(
            f"truth has {truth.shape[0]} entries, predictions {pred.mean.shape[0]}"
        )
    inside = (truth >= pred.lower95) & (truth <= pred.upper95)
    return {
        "rmse": float(np.sqrt(np.mean((pred.mean - truth) ** 2))),
        "coverage95": float(np.mean(inside)),
        "avg_length95": float(np.mean(pred.upper95 - pred.lower95)),
        "truth_sd": float(np.std(truth)),
    }
