import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pfscore import (
    Ar1Params, ar1_model, kalman_loglik, kalman_score_info, kalman_score_trace,
    simulate,
)
from pfscore.kalman import KalmanState, kalman_step, kalman_filter_moments

from conftest import assert_rel_close, fd_gradient, fd_jacobian


def dense_loglik(theta, y):
    """Joint-Gaussian evaluation with the full T x T covariance."""
    phi, sigma, tau = theta
    T = len(y)
    idx = np.arange(T)
    lags = np.abs(idx[:, None] - idx[None, :])
    cov = sigma**2 / (1 - phi**2) * phi**lags + tau**2 * np.eye(T)
    return multivariate_normal(mean=np.zeros(T), cov=cov).logpdf(y)


def test_single_observation_closed_form():
    theta = np.array([0.0, 1.0, 1.0])
    # predictive variance sigma^2/(1-phi^2) + tau^2 = 2
    assert kalman_loglik(theta, np.array([0.0])) == pytest.approx(
        -0.5 * np.log(4 * np.pi), abs=1e-14
    )


def test_increments_telescope():
    theta = np.array([0.6, 0.8, 1.2])
    rng = np.random.default_rng(3)
    model = ar1_model(Ar1Params(*theta))
    _, y = simulate(model, theta, 40, rng)
    total = kalman_loglik(theta, y)
    state = KalmanState()
    parts = []
    for y_t in y:
        prev = state.loglik
        state = kalman_step(state, y_t, theta)
        parts.append(state.loglik - prev)
    assert total == pytest.approx(sum(parts), abs=1e-12)
    for t in range(1, 41):
        assert kalman_loglik(theta, y[:t]) == pytest.approx(
            np.sum(parts[:t]), abs=1e-10
        )


def test_matches_dense_gaussian_oracle(ar1_star_data):
    _, theta, _, y = ar1_star_data
    assert kalman_loglik(theta, y[:50]) == pytest.approx(
        dense_loglik(theta, y[:50]), abs=1e-8
    )


def test_score_matches_finite_differences(ar1_star_data):
    _, theta, _, y = ar1_star_data
    score, _ = kalman_score_info(theta, y)
    fd = fd_gradient(lambda th: kalman_loglik(th, y), theta)
    assert_rel_close(score, fd, 1e-6, "kalman score")


def test_info_matches_finite_differences_and_symmetric(ar1_star_data):
    _, theta, _, y = ar1_star_data
    _, info = kalman_score_info(theta, y)
    fd = -fd_jacobian(lambda th: kalman_score_info(th, y)[0], theta)
    assert_rel_close(info, 0.5 * (fd + fd.T), 1e-5, "kalman info")
    np.testing.assert_allclose(info, info.T, atol=1e-12)


def test_score_info_vs_finite_differences_many_points():
    rng = np.random.default_rng(9)
    for _ in range(20):
        theta = np.array([
            rng.uniform(-0.9, 0.9), rng.uniform(0.4, 1.5), rng.uniform(0.4, 1.5),
        ])
        model = ar1_model(Ar1Params(*theta))
        _, y = simulate(model, theta, 60, rng)
        score, info = kalman_score_info(theta, y)
        assert_rel_close(
            score, fd_gradient(lambda th: kalman_loglik(th, y), theta), 1e-6,
            "score fd",
        )
        fd_info = -fd_jacobian(lambda th: kalman_score_info(th, y)[0], theta)
        assert_rel_close(info, 0.5 * (fd_info + fd_info.T), 1e-5, "info fd")


def grid_newton_mle(y, theta0=None):
    """Oracle MLE: coarse grid then Newton refinement on the exact score."""
    best, best_ll = None, -np.inf
    if theta0 is None:
        for phi in np.linspace(-0.6, 0.95, 8):
            for sigma in np.linspace(0.2, 1.4, 7):
                for tau in np.linspace(0.2, 1.6, 8):
                    ll = kalman_loglik(np.array([phi, sigma, tau]), y)
                    if ll > best_ll:
                        best, best_ll = np.array([phi, sigma, tau]), ll
    else:
        best = np.asarray(theta0, dtype=float)
    theta = best.copy()
    for _ in range(60):
        score, info = kalman_score_info(theta, y)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = score * 1e-3
        if np.linalg.norm(step) > 0.5:
            step = 0.5 * step / np.linalg.norm(step)
        theta = theta + step
        theta[0] = np.clip(theta[0], -0.995, 0.995)
        theta[1:] = np.maximum(theta[1:], 1e-3)
        if np.linalg.norm(score) < 1e-10:
            break
    return theta


def test_score_vanishes_at_grid_refined_mle(ar1_star_data):
    _, _, _, y = ar1_star_data
    theta_hat = grid_newton_mle(y)
    score, info = kalman_score_info(theta_hat, y)
    assert np.linalg.norm(score) <= 1e-6
    assert np.all(np.linalg.eigvalsh(info) > 0)


def test_filter_variance_bounds(ar1_star_data):
    _, theta, _, y = ar1_star_data
    phi, sigma, _ = theta
    _, variances, _ = kalman_filter_moments(theta, y)
    upper = sigma**2 / (1 - phi**2) + sigma**2
    assert np.all(variances > 0)
    assert np.all(variances <= upper + 1e-12)


def test_score_trace_last_row_matches(ar1_star_data):
    _, theta, _, y = ar1_star_data
    s_trace, i_diag = kalman_score_trace(theta, y)
    score, info = kalman_score_info(theta, y)
    np.testing.assert_allclose(s_trace[-1], score, atol=1e-12)
    np.testing.assert_allclose(i_diag[-1], np.diag(info), atol=1e-12)


def test_rejects_nonstationary():
    with pytest.raises(ValueError):
        kalman_loglik(np.array([1.01, 0.5, 1.0]), np.zeros(5))
