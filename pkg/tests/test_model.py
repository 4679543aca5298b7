import math

import numpy as np
import pytest
import scipy.stats

from fgpreg import (
    Dataset,
    InvalidInputError,
    KernelParams,
    LocationSet,
    ModelSpec,
    ObsPoint,
    ParamState,
    assemble_c_beta,
    assemble_sigma_y,
    assemble_sigma_z,
    cov_matrix,
    default_decay_support,
    log_marginal_likelihood,
    log_prior,
    matern_cov,
    prior_cov_pair,
)
from fgpreg.basis import SplineSpec, build_basis
from fgpreg.model import _basis_values, log_inverse_gamma

from conftest import obs_point, random_instance, random_state


def scalar_sigma_y_entry(data, bmat, state, s, i, t, j):
    """Pointwise covariance by direct summation (independent oracle)."""
    u, v = data.locations[i], data.locations[j]
    total = 0.0
    for b_idx, params in enumerate(state.beta_kernels):
        total += data.X[i, b_idx] * matern_cov(u, v, params) * data.X[j, b_idx]
    for k_idx, params in enumerate(state.eta_kernels):
        total += bmat[s, k_idx] * matern_cov(u, v, params) * bmat[t, k_idx]
    if s == t and i == j:
        total += state.nugget
    return total


class TestAssembleCBeta:
    def test_intercept_only_reduces_to_kernel_matrix(self, rng):
        locs = LocationSet(rng.uniform(0, 100, (5, 2)))
        params = KernelParams(1.3, 0.1)
        data = Dataset(locations=locs, X=np.ones((5, 1)), Z=np.zeros((2, 1)),
                       Y=np.zeros(10))
        state = ParamState((params,), (), 0.5)
        np.testing.assert_allclose(assemble_c_beta(data, state),
                                   cov_matrix(locs, params), atol=0)

    def test_constant_predictor_scales_quadratically(self, rng):
        locs = LocationSet(rng.uniform(0, 100, (5, 2)))
        params = KernelParams(1.3, 0.1)
        c = 2.7
        data = Dataset(locations=locs, X=np.full((5, 1), c), Z=np.zeros((2, 1)),
                       Y=np.zeros(10))
        state = ParamState((params,), (), 0.5)
        np.testing.assert_allclose(assemble_c_beta(data, state),
                                   c * c * cov_matrix(locs, params), rtol=1e-15)

    def test_matches_triple_sum_oracle(self, rng):
        n, q = 6, 3
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        X = rng.standard_normal((n, q))
        data = Dataset(locations=locs, X=X, Z=np.zeros((1, 1)), Y=np.zeros(n))
        state = random_state(rng, q, 0)
        result = assemble_c_beta(data, state)
        oracle = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                for b in range(q):
                    oracle[i, j] += X[i, b] * matern_cov(locs[i], locs[j],
                                                         state.beta_kernels[b]) * X[j, b]
        np.testing.assert_allclose(result, oracle, atol=1e-12)


class TestAssembleSigmaZ:
    def test_constant_basis_gives_ones_kron(self, rng):
        n, S = 4, 3
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        data = Dataset(locations=locs, X=np.ones((n, 1)), Z=np.zeros((S, 1)),
                       Y=np.zeros(S * n))
        params = KernelParams(2.0, 0.2)
        state = ParamState((KernelParams(1.0, 0.1),), (params,), 0.3)
        bmat = np.ones((S, 1))
        sigma_z = assemble_sigma_z(data, bmat, state)
        expected = np.kron(np.ones((S, S)), cov_matrix(locs, params))
        np.testing.assert_allclose(sigma_z, expected, atol=1e-13)

    def test_single_realization_block(self, rng):
        n, K = 4, 3
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        data = Dataset(locations=locs, X=np.ones((n, 1)),
                       Z=rng.uniform(0, 1, (1, 2)), Y=np.zeros(n))
        state = random_state(rng, 1, K)
        bmat = rng.uniform(0, 1, (1, K))
        sigma_z = assemble_sigma_z(data, bmat, state)
        expected = sum(
            bmat[0, k] ** 2 * cov_matrix(locs, state.eta_kernels[k]) for k in range(K)
        )
        np.testing.assert_allclose(sigma_z, expected, atol=1e-12)

    def test_matches_per_entry_oracle(self, rng):
        S, n, K = 3, 4, 4
        data, bmat, state = random_instance(rng, S=S, n=n, q=1, K=K)
        sigma_z = assemble_sigma_z(data, bmat, state)
        for s in range(S):
            for t in range(S):
                for i in range(n):
                    for j in range(n):
                        expected = sum(
                            bmat[s, k] * matern_cov(data.locations[i], data.locations[j],
                                                    state.eta_kernels[k]) * bmat[t, k]
                            for k in range(K)
                        )
                        assert sigma_z[s * n + i, t * n + j] == pytest.approx(expected, abs=1e-11)

    def test_linear_basis_is_svc_covariance(self, rng):
        # identity basis values B_k(z) = z_k make the global part a
        # spatially-varying coefficient covariance in z
        S, n = 4, 3
        data, _, state = random_instance(rng, S=S, n=n, q=1, K=2)
        bmat = data.Z  # (S, 2): component k reads off z_k
        sigma_z = assemble_sigma_z(data, bmat, state)
        for s in range(S):
            for t in range(S):
                block = sigma_z[s * n:(s + 1) * n, t * n:(t + 1) * n]
                expected = sum(
                    data.Z[s, k] * cov_matrix(data.locations, state.eta_kernels[k])
                    * data.Z[t, k]
                    for k in range(2)
                )
                np.testing.assert_allclose(block, expected, atol=1e-12)


class TestAssembleSigmaY:
    def test_minimal_reduction(self, rng):
        n = 4
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        data = Dataset(locations=locs, X=np.ones((n, 1)),
                       Z=np.zeros((1, 1)), Y=np.zeros(n))
        state = ParamState((KernelParams(1.1, 0.1),), (KernelParams(2.2, 0.3),), 0.7)
        sigma = assemble_sigma_y(data, np.ones((1, 1)), state)
        expected = (cov_matrix(locs, state.beta_kernels[0])
                    + cov_matrix(locs, state.eta_kernels[0]) + 0.7 * np.eye(n))
        np.testing.assert_allclose(sigma, expected, atol=1e-13)

    def test_diagonal_formula(self, rng):
        data, bmat, state = random_instance(rng, S=3, n=5, q=2, K=3)
        sigma = assemble_sigma_y(data, bmat, state)
        beta_var = np.array([p.variance for p in state.beta_kernels])
        eta_var = np.array([p.variance for p in state.eta_kernels])
        for s in range(3):
            for i in range(5):
                expected = (data.X[i] ** 2) @ beta_var + (bmat[s] ** 2) @ eta_var + state.nugget
                assert sigma[s * 5 + i, s * 5 + i] == pytest.approx(expected, rel=1e-12)

    def test_every_entry_matches_pointwise_covariance(self, rng):
        data, bmat, state = random_instance(rng, S=3, n=5, q=2, K=3)
        sigma = assemble_sigma_y(data, bmat, state)
        for s in range(3):
            for t in range(3):
                for i in range(5):
                    for j in range(5):
                        expected = prior_cov_pair(obs_point(data, bmat, s, i),
                                                  obs_point(data, bmat, t, j), state)
                        assert sigma[s * 5 + i, t * 5 + j] == pytest.approx(expected, abs=1e-10)

    def test_symmetric_and_positive_definite(self, rng):
        data, basis, state = random_instance(rng, S=4, n=6, q=2, K=4)
        sigma = assemble_sigma_y(data, basis, state)
        np.testing.assert_allclose(sigma, sigma.T, atol=1e-13)
        np.linalg.cholesky(sigma)


class TestPriorCovPair:
    def test_weighted_inner_product_at_fixed_location(self, rng):
        # same location, different realizations, zero functional predictors:
        # the covariance is the variance-weighted inner product of the basis
        # expansions
        K = 4
        state = ParamState((KernelParams(1.0, 0.1),), tuple(
            KernelParams(rng.uniform(1, 3), rng.uniform(0.05, 0.3)) for _ in range(K)
        ), 0.4)
        u = (10.0, 20.0)
        ba, bb = rng.uniform(0, 1, K), rng.uniform(0, 1, K)
        a = ObsPoint("s1", u, np.zeros(1), ba)
        b = ObsPoint("s2", u, np.zeros(1), bb)
        value = prior_cov_pair(a, b, state)
        expected = sum(state.eta_kernels[k].variance * ba[k] * bb[k] for k in range(K))
        assert value == pytest.approx(expected, rel=1e-12)

    def test_nugget_only_on_identical_observation(self, rng):
        state = ParamState((KernelParams(1.0, 0.1),), (), 0.9)
        u = (5.0, 5.0)
        same = prior_cov_pair(ObsPoint("a", u, np.ones(1), np.zeros(0)),
                              ObsPoint("a", u, np.ones(1), np.zeros(0)), state)
        diff_real = prior_cov_pair(ObsPoint("a", u, np.ones(1), np.zeros(0)),
                                   ObsPoint("b", u, np.ones(1), np.zeros(0)), state)
        assert same == pytest.approx(1.0 + 0.9)
        assert diff_real == pytest.approx(1.0)


class TestLogMarginalLikelihood:
    def test_standard_normal_scalar(self):
        data = Dataset(locations=LocationSet([[0.0, 0.0]]), X=np.empty((1, 0)),
                       Z=np.zeros((1, 1)), Y=np.zeros(1))
        state = ParamState((), (), 1.0)
        value = log_marginal_likelihood(data, None, state)
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)

    def test_identity_covariance_two_points(self):
        data = Dataset(locations=LocationSet([[0.0, 0.0], [50.0, 50.0]]),
                       X=np.empty((2, 0)), Z=np.zeros((1, 1)), Y=np.ones(2))
        state = ParamState((), (), 1.0)
        value = log_marginal_likelihood(data, None, state)
        assert value == pytest.approx(-1.0 - math.log(2 * math.pi), abs=1e-12)

    def test_matches_naive_inverse_oracle(self, rng):
        for _ in range(8):
            S = int(rng.integers(1, 4))
            n = int(rng.integers(2, 11))
            if S * n > 30:
                continue
            data, basis, state = random_instance(rng, S=S, n=n, q=2, K=3)
            value = log_marginal_likelihood(data, basis, state)
            sigma = assemble_sigma_y(data, basis, state)
            sign, logdet = np.linalg.slogdet(sigma)
            naive = -0.5 * (data.Y @ np.linalg.inv(sigma) @ data.Y + logdet
                            + len(data.Y) * math.log(2 * math.pi))
            assert sign > 0
            assert value == pytest.approx(naive, abs=1e-8)

    def test_realization_permutation_invariance(self, rng):
        data, basis, state = random_instance(rng, S=4, n=5, q=2, K=3)
        base = log_marginal_likelihood(data, basis, state)
        perm = rng.permutation(4)
        y_blocks = data.Y.reshape(4, 5)[perm].reshape(-1)
        permuted = Dataset(locations=data.locations, X=data.X, Z=data.Z[perm],
                           Y=y_blocks)
        value = log_marginal_likelihood(permuted, basis[perm], state)
        assert value == pytest.approx(base, abs=1e-9)

    def test_decreases_for_inflated_response(self, rng):
        data, basis, state = random_instance(rng, S=3, n=6, q=2, K=3)
        base = log_marginal_likelihood(data, basis, state)
        for c in (10.0, 100.0):
            inflated = Dataset(locations=data.locations, X=data.X, Z=data.Z,
                               Y=c * data.Y)
            assert log_marginal_likelihood(inflated, basis, state) < base


class TestLogPrior:
    def spec(self):
        basis = build_basis(SplineSpec(counts=(4,), bounds=((0.0, 1.0),)))
        return ModelSpec(basis=basis, prior_variance=(2.0, 1.0),
                         prior_nugget=(3.0, 2.0), prior_decay=(0.05, 1.5))

    def test_decay_outside_support(self):
        spec = self.spec()
        state = ParamState((KernelParams(1.0, 2.0),), (), 0.5)  # decay > 1.5
        assert log_prior(state, spec) == -math.inf

    def test_inverse_gamma_at_mode(self):
        spec = self.spec()
        a, b = spec.prior_variance
        mode = b / (a + 1.0)
        expected = a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(mode) - b / mode
        assert log_inverse_gamma(mode, a, b) == pytest.approx(expected, rel=1e-14)
        assert log_inverse_gamma(mode, a, b) == pytest.approx(
            scipy.stats.invgamma.logpdf(mode, a, scale=b), rel=1e-12
        )

    def test_full_state_matches_scipy_sum(self, rng):
        spec = self.spec()
        state = ParamState(
            tuple(KernelParams(rng.uniform(0.2, 3), rng.uniform(0.06, 1.4)) for _ in range(2)),
            tuple(KernelParams(rng.uniform(0.2, 3), rng.uniform(0.06, 1.4)) for _ in range(4)),
            rng.uniform(0.1, 2.0),
        )
        expected = 0.0
        for params in state.beta_kernels + state.eta_kernels:
            expected += scipy.stats.invgamma.logpdf(params.variance, 2.0, scale=1.0)
            expected += scipy.stats.uniform.logpdf(params.decay, 0.05, 1.45)
        expected += scipy.stats.invgamma.logpdf(state.nugget, 3.0, scale=2.0)
        assert log_prior(state, spec) == pytest.approx(expected, rel=1e-10)


class TestValidation:
    def test_dataset_length_check(self, rng):
        with pytest.raises(InvalidInputError):
            Dataset(locations=LocationSet(rng.uniform(0, 1, (3, 2))),
                    X=np.ones((3, 1)), Z=np.zeros((2, 1)), Y=np.zeros(5))

    def test_dataset_nonfinite(self, rng):
        with pytest.raises(InvalidInputError):
            Dataset(locations=LocationSet(rng.uniform(0, 1, (2, 2))),
                    X=np.ones((2, 1)), Z=np.zeros((1, 1)),
                    Y=np.array([1.0, np.nan]))

    def test_state_kernel_count_mismatch(self, rng):
        data, basis, state = random_instance(rng, S=2, n=3, q=2, K=3)
        bad = ParamState(state.beta_kernels[:1], state.eta_kernels, state.nugget)
        with pytest.raises(InvalidInputError):
            assemble_sigma_y(data, basis, bad)

    def test_default_decay_support(self, rng):
        locs = LocationSet(rng.uniform(0, 100, (30, 2)))
        lo, hi = default_decay_support(locs)
        assert 0 < lo < hi
        from fgpreg.kernels import distance_matrix

        d = distance_matrix(locs)
        pos = d[d > 0]
        assert lo == pytest.approx(3.0 / pos.max())
        assert hi == pytest.approx(3.0 / pos.min())
