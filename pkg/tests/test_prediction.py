import numpy as np
import pytest

from fgpreg import (
    Dataset,
    KernelParams,
    LocationSet,
    ModelSpec,
    ParamState,
    PredictionResult,
    TestSet,
    evaluate_metrics,
    latent_surfaces,
    posterior_predictive,
    predictive_moments,
)
from fgpreg.basis import SplineSpec, build_basis, basis_matrix
from fgpreg.kernels import cov_matrix, cross_cov_matrix
from fgpreg.model import ObsPoint, _basis_values, prior_cov_pair

from conftest import random_state


def build_problem(rng, S=3, n=5, q=2, S_test=2, n_test=3, counts=(4,)):
    basis = build_basis(SplineSpec(counts=counts, bounds=tuple((0.0, 1.0) for _ in counts)))
    K = basis.K
    locs = LocationSet(rng.uniform(0, 100, (n, 2)))
    test_locs = LocationSet(rng.uniform(0, 100, (n_test, 2)))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, q - 1))])
    X_test = np.column_stack([np.ones(n_test), rng.standard_normal((n_test, q - 1))])
    Z = rng.uniform(0, 1, (S, len(counts)))
    Z_test = rng.uniform(0, 1, (S_test, len(counts)))
    state = random_state(rng, q, K)
    data = Dataset(locations=locs, X=X, Z=Z, Y=rng.standard_normal(S * n))
    test = TestSet(locations=test_locs, X_test=X_test, Z_test=Z_test)
    return data, basis, test, state


def joint_conditioning_oracle(draw, data, basis, test):
    """Naive oracle: build the full (train + test) covariance entry by entry
    with the pointwise covariance function, then condition."""
    bmat_train = _basis_values(basis, data.Z)
    bmat_test = _basis_values(basis, test.Z_test)
    points = []
    for s in range(data.S):
        for i in range(data.n):
            points.append(ObsPoint(("train", s), tuple(data.locations[i]),
                                   data.X[i], bmat_train[s]))
    for a in range(test.S_test):
        for i in range(test.n_test):
            points.append(ObsPoint(("test", a), tuple(test.locations[i]),
                                   test.X_test[i], bmat_test[a]))
    total = len(points)
    cov = np.empty((total, total))
    for i in range(total):
        for j in range(total):
            cov[i, j] = prior_cov_pair(points[i], points[j], draw)
    n_train = data.S * data.n
    c_tt = cov[:n_train, :n_train]
    c_star = cov[n_train:, :n_train]
    c_ss = cov[n_train:, n_train:]
    solve = np.linalg.solve(c_tt, data.Y)
    mean = c_star @ solve
    cond = c_ss - c_star @ np.linalg.solve(c_tt, c_star.T)
    return mean, np.diag(cond)


class TestPredictiveMoments:
    def test_matches_joint_conditioning_oracle(self, rng):
        for trial in range(6):
            data, basis, test, state = build_problem(
                rng, S=int(rng.integers(2, 4)), n=int(rng.integers(3, 7)),
                S_test=2, n_test=int(rng.integers(1, 4)))
            mean, var = predictive_moments(state, data, basis, test)
            o_mean, o_var = joint_conditioning_oracle(state, data, basis, test)
            np.testing.assert_allclose(mean, o_mean, atol=1e-8)
            np.testing.assert_allclose(var, o_var, atol=1e-8)

    def test_near_interpolation_at_training_point(self, rng):
        data, basis, test, state = build_problem(rng, S=2, n=4, q=2)
        state = ParamState(state.beta_kernels, state.eta_kernels, 1e-10)
        # test point = first training point of the first realization, with
        # matching predictors and matching global-predictor vector
        test = TestSet(
            locations=LocationSet([data.locations[0]]),
            X_test=data.X[:1],
            Z_test=data.Z[:1],
        )
        mean, var = predictive_moments(state, data, basis, test)
        assert abs(mean[0] - data.Y[0]) < 1e-4
        assert np.sqrt(var[0]) < 1e-3

    def test_reverts_to_prior_far_away(self, rng):
        # distant location and a test realization activating only basis
        # components never touched by training
        basis = build_basis(SplineSpec(counts=(4,), bounds=((0.0, 1.0),)))
        n = 4
        locs = LocationSet(rng.uniform(0, 1, (n, 2)))
        data = Dataset(locations=locs,
                       X=np.column_stack([np.ones(n), rng.standard_normal(n)]),
                       Z=np.zeros((2, 1)),  # all mass on the first component
                       Y=rng.standard_normal(2 * n))
        state = random_state(rng, 2, 4)
        test = TestSet(locations=LocationSet([[5e4, 5e4]]),
                       X_test=np.array([[1.0, 0.5]]),
                       Z_test=np.ones((1, 1)))  # all mass on the last component
        mean, var = predictive_moments(state, data, basis, test)
        bmat_test = basis_matrix(basis, test.Z_test)
        prior = ((test.X_test[0] ** 2) @ np.array([p.variance for p in state.beta_kernels])
                 + (bmat_test[0] ** 2) @ np.array([p.variance for p in state.eta_kernels])
                 + state.nugget)
        assert abs(mean[0]) < 1e-6
        assert var[0] == pytest.approx(prior, rel=1e-6)

    def test_intervals_widen_with_inflated_nugget(self, rng):
        data, basis, test, state = build_problem(rng)
        _, var_base = predictive_moments(state, data, basis, test)
        inflated = ParamState(state.beta_kernels, state.eta_kernels, 10 * state.nugget)
        _, var_inflated = predictive_moments(inflated, data, basis, test)
        assert np.all(var_inflated > var_base)


class TestPosteriorPredictive:
    def test_single_draw_matches_gaussian_interval(self, rng):
        data, basis, test, state = build_problem(rng)
        pred = posterior_predictive([state], data, basis, test, seed=1,
                                    n_deviates=4000)
        mean, var = predictive_moments(state, data, basis, test)
        sd = np.sqrt(var)
        np.testing.assert_allclose(pred.mean, mean, atol=1e-12)
        np.testing.assert_allclose(pred.sd, sd, rtol=1e-10)
        half = pred.upper95 - pred.lower95
        np.testing.assert_allclose(half, 2 * 1.96 * sd, rtol=0.05)
        np.testing.assert_allclose(pred.lower95, mean - 1.96 * sd, atol=0.1 * sd.max())

    def test_two_identical_draws_match_one(self, rng):
        data, basis, test, state = build_problem(rng)
        one = posterior_predictive([state], data, basis, test, seed=2, n_deviates=4000)
        two = posterior_predictive([state, state], data, basis, test, seed=2,
                                   n_deviates=2000)
        np.testing.assert_allclose(one.mean, two.mean, atol=1e-12)
        np.testing.assert_allclose(one.sd, two.sd, rtol=1e-10)
        np.testing.assert_allclose(one.lower95, two.lower95, atol=0.15 * one.sd.max())

    def test_deterministic_given_seed(self, rng):
        data, basis, test, state = build_problem(rng)
        a = posterior_predictive([state], data, basis, test, seed=5, n_deviates=100)
        b = posterior_predictive([state], data, basis, test, seed=5, n_deviates=100)
        np.testing.assert_array_equal(a.lower95, b.lower95)

    def test_interval_contains_mean_and_orders(self, rng):
        data, basis, test, state = build_problem(rng)
        states = [state,
                  ParamState(state.beta_kernels, state.eta_kernels, 2 * state.nugget)]
        pred = posterior_predictive(states, data, basis, test, seed=3, n_deviates=500)
        assert np.all(pred.lower95 < pred.upper95)
        assert np.all(pred.lower95 <= pred.mean)
        assert np.all(pred.mean <= pred.upper95)

    def test_empty_draws_rejected(self, rng):
        data, basis, test, _ = build_problem(rng)
        with pytest.raises(Exception):
            posterior_predictive([], data, basis, test)

    def test_max_draws_subsamples(self, rng):
        data, basis, test, state = build_problem(rng)
        states = [ParamState(state.beta_kernels, state.eta_kernels,
                             state.nugget * (1 + 0.01 * i)) for i in range(10)]
        pred = posterior_predictive(states, data, basis, test, seed=4,
                                    n_deviates=10, max_draws=3)
        assert pred.mean.shape == (test.n_points,)


class TestLatentSurfaces:
    def test_kriging_reduction(self, rng):
        # no global effect, single intercept predictor: the coefficient
        # surface posterior is plain GP regression on the pooled data
        n, S = 6, 2
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        params = KernelParams(1.5, 0.08)
        state = ParamState((params,), (), 0.3)
        y = rng.standard_normal(S * n)
        data = Dataset(locations=locs, X=np.ones((n, 1)),
                       Z=rng.uniform(0, 1, (S, 1)), Y=y)
        grid = LocationSet(rng.uniform(0, 100, (4, 2)))
        surf = latent_surfaces(state, data, None, grid)
        k_star = cross_cov_matrix(grid, locs, params)
        big = np.kron(np.ones((S, S)), cov_matrix(locs, params)) + 0.3 * np.eye(S * n)
        oracle = np.tile(k_star, (1, S)) @ np.linalg.solve(big, y)
        np.testing.assert_allclose(surf.beta_mean[0], oracle, atol=1e-8)

    def test_zero_information_limit_returns_prior(self, rng):
        data, basis, test, state = build_problem(rng)
        far_grid = LocationSet([[1e6, 1e6]])
        surf = latent_surfaces(state, data, basis, far_grid)
        for j, params in enumerate(state.beta_kernels):
            assert abs(surf.beta_mean[j, 0]) < 1e-8
            assert surf.beta_sd[j, 0] == pytest.approx(np.sqrt(params.variance), rel=1e-9)
        for k, params in enumerate(state.eta_kernels):
            assert abs(surf.eta_mean[k, 0]) < 1e-8
            assert surf.eta_sd[k, 0] == pytest.approx(np.sqrt(params.variance), rel=1e-9)

    def test_reconstruction_matches_noise_free_mean(self, rng):
        data, basis, test, state = build_problem(rng, S=3, n=5, q=2)
        surf = latent_surfaces(state, data, basis, data.locations)
        bmat = _basis_values(basis, data.Z)
        onfit = TestSet(locations=data.locations, X_test=data.X, Z_test=data.Z)
        mean, _ = predictive_moments(state, data, basis, onfit)
        recon = np.empty(data.S * data.n)
        for s in range(data.S):
            for i in range(data.n):
                value = data.X[i] @ surf.beta_mean[:, i]
                value += bmat[s] @ surf.eta_mean[:, i]
                recon[s * data.n + i] = value
        np.testing.assert_allclose(recon, mean, atol=1e-6)

    def test_matches_joint_conditioning_oracle(self, rng):
        # oracle over (latents, Y): condition the stacked beta surfaces on Y
        n, S = 4, 2
        locs = LocationSet(rng.uniform(0, 100, (n, 2)))
        params = KernelParams(2.0, 0.1)
        state = ParamState((params,), (), 0.5)
        x = rng.standard_normal((n, 1))
        y = rng.standard_normal(S * n)
        data = Dataset(locations=locs, X=x, Z=rng.uniform(0, 1, (S, 1)), Y=y)
        grid = LocationSet(rng.uniform(0, 100, (3, 2)))
        surf = latent_surfaces(state, data, None, grid)
        c_gg = cov_matrix(grid, params)
        c_gu = cross_cov_matrix(grid, locs, params)
        cross = np.tile(c_gu * x[:, 0][None, :], (1, S))
        sigma = (np.kron(np.ones((S, S)), x[:, 0][:, None] * cov_matrix(locs, params)
                         * x[:, 0][None, :]) + 0.5 * np.eye(S * n))
        mean_oracle = cross @ np.linalg.solve(sigma, y)
        cov_oracle = c_gg - cross @ np.linalg.solve(sigma, cross.T)
        np.testing.assert_allclose(surf.beta_mean[0], mean_oracle, atol=1e-8)
        np.testing.assert_allclose(surf.beta_sd[0], np.sqrt(np.diag(cov_oracle)),
                                   atol=1e-8)


class TestEvaluateMetrics:
    def test_perfect_mean_gives_zero_rmse(self):
        pred = PredictionResult(mean=np.array([1.0, 2.0]), sd=np.array([1.0, 1.0]),
                                lower95=np.array([0.0, 1.0]), upper95=np.array([2.0, 3.0]))
        m = evaluate_metrics(pred, np.array([1.0, 2.0]))
        assert m["rmse"] == 0.0

    def test_everything_covered(self):
        pred = PredictionResult(mean=np.zeros(3), sd=np.ones(3),
                                lower95=np.full(3, -100.0), upper95=np.full(3, 100.0))
        m = evaluate_metrics(pred, np.array([5.0, -7.0, 50.0]))
        assert m["coverage95"] == 1.0

    def test_hand_computed_four_point_case(self):
        pred = PredictionResult(
            mean=np.array([1.0, 2.0, 3.0, 4.0]),
            sd=np.ones(4),
            lower95=np.array([0.0, 1.0, 2.0, 3.0]),
            upper95=np.array([2.0, 3.0, 4.0, 6.0]),
        )
        truth = np.array([1.5, 2.0, 5.0, 3.5])
        m = evaluate_metrics(pred, truth)
        # errors (-0.5, 0, -2, 0.5): rmse = sqrt(4.5 / 4)
        assert m["rmse"] == pytest.approx(1.0606601717798212, rel=1e-15)
        assert m["coverage95"] == 0.75
        assert m["avg_length95"] == pytest.approx(2.25)
        # population sd of (1.5, 2, 5, 3.5) around mean 3
        assert m["truth_sd"] == pytest.approx(1.3693063937629153, rel=1e-15)

    def test_length_mismatch(self):
        pred = PredictionResult(mean=np.zeros(3), sd=np.ones(3),
                                lower95=-np.ones(3), upper95=np.ones(3))
        with pytest.raises(Exception):
            evaluate_metrics(pred, np.zeros(4))


class TestCalibrationUnderTruth:
    def test_coverage_with_known_parameters(self, rng):
        # simulate train + test jointly from a fixed state, predict with the
        # same state: single-draw +-1.96 sd intervals must be calibrated over
        # at least 2000 test points
        from fgpreg.model import assemble_sigma_y

        S, n, q = 6, 25, 2
        S_test, n_test = 20, 100
        basis = build_basis(SplineSpec(counts=(4,), bounds=((0.0, 1.0),)))
        state = random_state(rng, q, basis.K)
        all_locs = rng.uniform(0, 100, (n + n_test, 2))
        all_x = np.column_stack([np.ones(n + n_test), rng.standard_normal(n + n_test)])
        all_z = rng.uniform(0, 1, (S + S_test, 1))
        # joint covariance of every (realization, location) pair, then select
        # the observed pattern: train realizations at train locations, test
        # realizations at test locations
        combined = Dataset(locations=LocationSet(all_locs), X=all_x, Z=all_z,
                           Y=np.zeros((S + S_test) * (n + n_test)))
        sigma_full = assemble_sigma_y(combined, basis, state)
        width = n + n_test
        train_idx = np.concatenate([s * width + np.arange(n) for s in range(S)])
        test_idx = np.concatenate([(S + a) * width + n + np.arange(n_test)
                                   for a in range(S_test)])
        sel = np.concatenate([train_idx, test_idx])
        sigma_sel = sigma_full[np.ix_(sel, sel)]
        chol = np.linalg.cholesky(sigma_sel + 1e-10 * np.eye(sel.size))
        joint = chol @ rng.standard_normal(sel.size)
        n_train = S * n
        data = Dataset(locations=LocationSet(all_locs[:n]), X=all_x[:n],
                       Z=all_z[:S], Y=joint[:n_train])
        test = TestSet(locations=LocationSet(all_locs[n:]), X_test=all_x[n:],
                       Z_test=all_z[S:])
        y_test = joint[n_train:]
        mean, var = predictive_moments(state, data, basis, test)
        sd = np.sqrt(var)
        coverage = float(np.mean(np.abs(y_test - mean) <= 1.96 * sd))
        assert 0.92 <= coverage <= 0.98, f"coverage {coverage:.3f}"
