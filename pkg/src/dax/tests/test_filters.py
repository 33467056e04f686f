"""
Tests for the three assimilation methods and the cycling driver.

Verifies:
  1. The sequential step reproduces the scalar Kalman update, matches the
     Joseph-form analysis covariance and leaves a zero-spread ensemble unchanged.
  2. With L = 1 the 4D-EnKF window equals one sequential step.
  3. QPCA-EnDCF is deterministic, never draws random numbers and annihilates
     the projected residual.
  4. run_filter records native and window-end analyses, and records
     divergence instead of raising it.
  5. create_filter and run_filter reject bad input.
"""

import numpy as np
import pytest

from src.dax.dynamics import forecast, spin_up_truth, truth_trajectory
from src.dax.ensemble import dc_gain, initial_ensemble
from src.dax.errors import InvalidInputError
from src.dax.filters import (
    FourDEnKF,
    QpcaEnDCF,
    SequentialEnKF,
    create_filter,
    fourd_enkf_window,
    qpca_endcf_analysis,
    qpca_endcf_window,
    run_filter,
    seq_enkf_step,
    window_forecast,
)
from src.dax.models import FilterConfig, ObsOperator
from src.dax.observation import stack_window, synthesize_observations
from src.dax.spectral import qpca_increment, residual_set, truncated_basis


def _experiment(cfg: FilterConfig, seed: int = 0):
    """Truth, observation record and initial ensemble for a short run."""
    rng = np.random.default_rng(seed)
    x0 = spin_up_truth(cfg.model, spinup_time=5.0)
    truth = truth_trajectory(x0, cfg.K, cfg.model)
    observations = synthesize_observations(cfg.obs_operator(), truth[1:], cfg.sigma_obs, rng)
    initial = initial_ensemble(truth[0], cfg.N, 1.0, rng)
    return truth, observations, initial


class TestSequentialStep:

    def test_zero_spread_is_unchanged(self) -> None:
        H = ObsOperator.regular(6, 3)
        X = np.tile(np.arange(6.0)[:, None], (1, 5))
        result = seq_enkf_step(X, np.ones(3), H, np.eye(3), 1.0, np.random.default_rng(0))
        np.testing.assert_array_equal(result, X)

    def test_scalar_kalman_update(self) -> None:
        """Prior N(0, 4), R = 1, z = 1: posterior mean 0.8 and variance 0.8."""
        rng = np.random.default_rng(1)
        H = ObsOperator.regular(1, 1)
        X = 2.0 * rng.standard_normal((1, 20_000))
        result = seq_enkf_step(X, np.array([1.0]), H, np.eye(1), 1.0, rng)
        assert result.mean() == pytest.approx(0.8, abs=0.04)
        assert result.var(ddof=1) == pytest.approx(0.8, rel=0.03)

    def test_mean_update_without_perturbations(self) -> None:
        rng = np.random.default_rng(2)
        H = ObsOperator.regular(4, 2)
        X = rng.standard_normal((4, 8))
        z = np.array([0.5, -0.5])
        R = 0.5 * np.eye(2)
        result = seq_enkf_step(X, z, H, R, 1.0, None, perturb=False)

        P = np.cov(X)
        idx = H.selected_indices
        gain = P[:, idx] @ np.linalg.inv(P[np.ix_(idx, idx)] + R)
        expected = X.mean(axis=1) + gain @ (z - X.mean(axis=1)[idx])
        np.testing.assert_allclose(result.mean(axis=1), expected, atol=1e-10)

    def test_analysis_covariance_matches_joseph_form(self) -> None:
        rng = np.random.default_rng(4)
        H = ObsOperator.regular(3, 2)
        prior = np.array([[2.0, 0.6, 0.3], [0.6, 1.5, 0.2], [0.3, 0.2, 1.0]])
        X = np.linalg.cholesky(prior) @ rng.standard_normal((3, 40_000))
        R = np.diag([0.5, 1.0])
        result = seq_enkf_step(X, np.array([0.3, -0.2]), H, R, 1.0, rng)

        P = np.cov(X)
        h = H.matrix()
        gain = P @ h.T @ np.linalg.inv(h @ P @ h.T + R)
        residual = np.eye(3) - gain @ h
        expected = residual @ P @ residual.T + gain @ R @ gain.T
        np.testing.assert_allclose(np.cov(result), expected, atol=0.04)

    def test_inflation_applied_after_update(self) -> None:
        H = ObsOperator.regular(4, 2)
        X = np.random.default_rng(3).standard_normal((4, 6))
        plain = seq_enkf_step(X, np.zeros(2), H, np.eye(2), 1.0, None, perturb=False)
        inflated = seq_enkf_step(X, np.zeros(2), H, np.eye(2), 1.2, None, perturb=False)
        np.testing.assert_allclose(np.cov(inflated), 1.44 * np.cov(plain), atol=1e-10)

    def test_perturbation_needs_rng(self) -> None:
        H = ObsOperator.regular(4, 2)
        with pytest.raises(InvalidInputError):
            seq_enkf_step(np.ones((4, 3)) + np.eye(4, 3), np.zeros(2), H, np.eye(2), 1.0, None)

    def test_mismatched_observation_rejected(self) -> None:
        H = ObsOperator.regular(4, 2)
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidInputError):
            seq_enkf_step(rng.standard_normal((4, 3)), np.zeros(3), H, np.eye(2), 1.0, rng)


class TestFourDEnKF:

    def test_single_interval_window_matches_sequential_step(self) -> None:
        cfg = FilterConfig(method="fourd_enkf", L=1, W=1, lambda_infl=1.05)
        truth, observations, initial = _experiment(cfg)
        window = stack_window(observations[:1], sigma_obs=cfg.sigma_obs)

        windowed = fourd_enkf_window(initial, window, cfg, np.random.default_rng(9))
        sequential = seq_enkf_step(
            forecast(initial, cfg.model),
            observations[0],
            cfg.obs_operator(),
            window.r_stacked,
            cfg.lambda_infl,
            np.random.default_rng(9),
        )
        np.testing.assert_allclose(windowed, sequential, atol=1e-8)

    def test_zero_anomaly_ensemble_is_only_propagated(self) -> None:
        cfg = FilterConfig(method="fourd_enkf", L=3, W=1)
        truth, observations, _ = _experiment(cfg)
        X = np.tile(truth[0][:, None], (1, cfg.N))
        window = stack_window(observations[:3], sigma_obs=cfg.sigma_obs)
        result = fourd_enkf_window(X, window, cfg, np.random.default_rng(0))
        expected, _ = window_forecast(X, 3, cfg.obs_operator(), cfg.model)
        np.testing.assert_allclose(result, expected, atol=1e-12)

    def test_window_forecast_stacks_in_time_order(self) -> None:
        cfg = FilterConfig(method="fourd_enkf", L=2, W=1)
        _, _, initial = _experiment(cfg)
        H = cfg.obs_operator()
        x_end, Z = window_forecast(initial, 2, H, cfg.model)
        first = forecast(initial, cfg.model)
        assert Z.shape == (2 * cfg.m, cfg.N)
        np.testing.assert_array_equal(Z[: cfg.m], first[H.selected_indices])
        np.testing.assert_array_equal(x_end, forecast(first, cfg.model))


class TestQpcaEnDCF:

    def test_zero_residual_leaves_forecast_unchanged(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=1, W=1, m=2, n=40)
        X = np.random.default_rng(0).standard_normal((40, cfg.N))
        Z = np.zeros((2, cfg.N))
        window = stack_window([np.zeros(2)], sigma_obs=1.0, k_start=4)
        result, info = qpca_endcf_analysis(X, Z, window, cfg)
        np.testing.assert_array_equal(result, X)
        assert info.effective_kappa == 0
        assert info.k_w == 5

    def test_update_is_gain_times_increment(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=1, kappa=2)
        _, observations, initial = _experiment(cfg)
        window = stack_window(observations[:2], sigma_obs=cfg.sigma_obs)
        x_end, Z = window_forecast(initial, 2, cfg.obs_operator(), cfg.model)

        result, info = qpca_endcf_analysis(x_end, Z, window, cfg)
        rs = residual_set(Z, window.stacked, window)
        increment = qpca_increment(rs, truncated_basis(rs, 2), window)
        expected = x_end + dc_gain(x_end, Z).gain @ increment
        np.testing.assert_allclose(result, expected, atol=1e-10)
        assert info.effective_kappa == 2
        assert 0.0 < info.leading_fraction <= 1.0
        assert info.projected_residual_norm <= 1e-10

    def test_window_wrapper_matches_analysis(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=3, W=1)
        _, observations, initial = _experiment(cfg)
        window = stack_window(observations[:3], sigma_obs=cfg.sigma_obs)
        x_end, Z = window_forecast(initial, 3, cfg.obs_operator(), cfg.model)
        expected, _ = qpca_endcf_analysis(x_end, Z, window, cfg)
        np.testing.assert_array_equal(qpca_endcf_window(initial, window, cfg), expected)

    def test_never_draws_random_numbers(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=3)
        truth, observations, initial = _experiment(cfg)
        rng = np.random.default_rng(5)
        before = rng.bit_generator.state
        run_filter(cfg, truth, observations, initial, rng)
        assert rng.bit_generator.state == before

    def test_runs_are_bit_identical(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=3, W=3)
        truth, observations, initial = _experiment(cfg)
        first = run_filter(cfg, truth, observations, initial)
        second = run_filter(cfg, truth, observations, initial)
        for a, b in zip(first.endpoint_analyses, second.endpoint_analyses):
            assert np.array_equal(a, b)

    def test_projected_residual_annihilated_every_window(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=5, W=4, kappa=1)
        truth, observations, initial = _experiment(cfg)
        run = run_filter(cfg, truth, observations, initial)
        assert [info.window for info in run.window_info] == [1, 2, 3, 4]
        for info in run.window_info:
            assert info.projected_residual_norm <= 1e-10

    def test_ensemble_does_not_collapse(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=5, W=20)
        truth, observations, initial = _experiment(cfg, seed=3)
        run = run_filter(cfg, truth, observations, initial)
        assert not run.diverged
        for members in run.endpoint_analyses:
            assert np.all(np.isfinite(members))
            assert np.std(members, axis=1).mean() > 1e-8


class TestCreateFilter:

    def test_dispatch(self) -> None:
        rng = np.random.default_rng(0)
        assert isinstance(create_filter(FilterConfig(method="seq_enkf"), rng), SequentialEnKF)
        assert isinstance(create_filter(FilterConfig(method="fourd_enkf"), rng), FourDEnKF)
        assert isinstance(create_filter(FilterConfig(method="qpca_endcf")), QpcaEnDCF)

    def test_stochastic_methods_need_rng(self) -> None:
        for method in ("seq_enkf", "fourd_enkf"):
            with pytest.raises(InvalidInputError):
                create_filter(FilterConfig(method=method))

    def test_unknown_method(self) -> None:
        with pytest.raises(InvalidInputError):
            FilterConfig(method="etkf")


class TestRunFilter:

    def test_sequential_native_times(self) -> None:
        cfg = FilterConfig(method="seq_enkf", L=3, W=2, lambda_infl=1.05)
        truth, observations, initial = _experiment(cfg)
        run = run_filter(cfg, truth, observations, initial, np.random.default_rng(1))
        assert run.native_times == [1, 2, 3, 4, 5, 6]
        assert run.endpoint_times == [3, 6]
        np.testing.assert_array_equal(run.endpoint_analyses[1], run.native_analyses[-1])
        np.testing.assert_array_equal(run.endpoint_truth[0], truth[3])
        assert run.window_info == []

    def test_single_window_single_update(self) -> None:
        for method in ("fourd_enkf", "qpca_endcf"):
            cfg = FilterConfig(method=method, L=1, W=1, lambda_infl=1.05)
            truth, observations, initial = _experiment(cfg)
            run = run_filter(cfg, truth, observations, initial, np.random.default_rng(2))
            assert run.native_times == [1]
            assert run.endpoint_times == [1]

    def test_observation_digest_recorded(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=2)
        truth, observations, initial = _experiment(cfg)
        run = run_filter(cfg, truth, observations, initial)
        assert len(run.observation_digest) == 64

    def test_divergence_is_recorded(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=3)
        truth, observations, _ = _experiment(cfg)
        blown_up = 1e5 * np.random.default_rng(4).standard_normal((cfg.n, cfg.N))
        run = run_filter(cfg, truth, observations, blown_up)
        assert run.diverged
        assert run.failure
        assert run.endpoint_times == []

    def test_truth_shape_checked(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=2)
        truth, observations, initial = _experiment(cfg)
        with pytest.raises(InvalidInputError):
            run_filter(cfg, truth[:-1], observations, initial)

    def test_ensemble_shape_checked(self) -> None:
        cfg = FilterConfig(method="qpca_endcf", L=2, W=2)
        truth, observations, initial = _experiment(cfg)
        with pytest.raises(InvalidInputError):
            run_filter(cfg, truth, observations, initial[:, :-1])
