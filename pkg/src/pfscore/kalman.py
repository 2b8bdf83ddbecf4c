"""Exact Kalman filter for the AR(1) plus noise model.

Provides the log-likelihood, score vector and observed information matrix by
differentiating the filter's prediction/update recursions with first- and
second-order tangents in theta = (phi, sigma, tau).  Serves as the noise-free
reference for every particle estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models.ar1 import Ar1Params, _validate
from .models.base import as_theta_array

_LOG2PI = np.log(2.0 * np.pi)

_E_PHI = np.array([1.0, 0.0, 0.0])
_E_SIGMA = np.array([0.0, 1.0, 0.0])
_E_TAU = np.array([0.0, 0.0, 1.0])


@dataclass
class KalmanState:
    """Filtering state after an update, with tangents w.r.t. (phi, sigma, tau)."""

    mean: float = 0.0
    var: float = 0.0
    loglik: float = 0.0
    dmean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dvar: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d2mean: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    d2var: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    dloglik: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d2loglik: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    t: int = 0


def _stationary_var_tangents(phi, sigma):
    c = 1.0 - phi * phi
    v = sigma * sigma / c
    dv = np.array([2.0 * phi * v / c, 2.0 * v / sigma, 0.0])
    d2v = np.zeros((3, 3))
    d2v[0, 0] = 2.0 * v / c + 8.0 * phi * phi * v / (c * c)
    d2v[0, 1] = d2v[1, 0] = 4.0 * phi * v / (sigma * c)
    d2v[1, 1] = 2.0 * v / (sigma * sigma)
    return v, dv, d2v


def kalman_step(state: KalmanState, y_t: float, theta) -> KalmanState:
    """Advance the differentiated filter by one observation."""
    phi, sigma, tau = theta
    s = state
    if s.t == 0:
        mp = 0.0
        dmp = np.zeros(3)
        d2mp = np.zeros((3, 3))
        pp, dpp, d2pp = _stationary_var_tangents(phi, sigma)
    else:
        mp = phi * s.mean
        dmp = _E_PHI * s.mean + phi * s.dmean
        d2mp = phi * s.d2mean + np.outer(_E_PHI, s.dmean) + np.outer(s.dmean, _E_PHI)
        pp = phi * phi * s.var + sigma * sigma
        dpp = 2.0 * phi * s.var * _E_PHI + phi * phi * s.dvar + 2.0 * sigma * _E_SIGMA
        d2pp = (
            2.0 * s.var * np.outer(_E_PHI, _E_PHI)
            + 2.0 * phi * (np.outer(_E_PHI, s.dvar) + np.outer(s.dvar, _E_PHI))
            + phi * phi * s.d2var
            + 2.0 * np.outer(_E_SIGMA, _E_SIGMA)
        )

    e = y_t - mp
    de = -dmp
    d2e = -d2mp
    sv = pp + tau * tau
    dsv = dpp + 2.0 * tau * _E_TAU
    d2sv = d2pp + 2.0 * np.outer(_E_TAU, _E_TAU)

    inc = -0.5 * (_LOG2PI + np.log(sv)) - e * e / (2.0 * sv)
    dinc = -dsv / (2.0 * sv) - e * de / sv + e * e * dsv / (2.0 * sv * sv)
    d2inc = (
        -d2sv / (2.0 * sv)
        + np.outer(dsv, dsv) / (2.0 * sv * sv)
        - (np.outer(de, de) + e * d2e) / sv
        + e * (np.outer(de, dsv) + np.outer(dsv, de)) / (sv * sv)
        + e * e * d2sv / (2.0 * sv * sv)
        - e * e * np.outer(dsv, dsv) / (sv ** 3)
    )

    k = pp / sv
    dk = dpp / sv - pp * dsv / (sv * sv)
    d2k = (
        d2pp / sv
        - (np.outer(dpp, dsv) + np.outer(dsv, dpp)) / (sv * sv)
        - pp * d2sv / (sv * sv)
        + 2.0 * pp * np.outer(dsv, dsv) / (sv ** 3)
    )

    mean = mp + k * e
    dmean = dmp + dk * e + k * de
    d2mean = d2mp + d2k * e + np.outer(dk, de) + np.outer(de, dk) + k * d2e
    var = (1.0 - k) * pp
    dvar = -dk * pp + (1.0 - k) * dpp
    d2var = -d2k * pp - np.outer(dk, dpp) - np.outer(dpp, dk) + (1.0 - k) * d2pp

    return KalmanState(
        mean=mean, var=var, loglik=s.loglik + inc,
        dmean=dmean, dvar=dvar, d2mean=d2mean, d2var=d2var,
        dloglik=s.dloglik + dinc, d2loglik=s.d2loglik + d2inc,
        t=s.t + 1,
    )


def _run(theta, y):
    theta = as_theta_array(theta, 3)
    _validate(theta[0], theta[1], theta[2])
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("y must be a 1-d array with T >= 1")
    state = KalmanState()
    for y_t in y:
        state = kalman_step(state, y_t, theta)
    return state


def kalman_loglik(params, y) -> float:
    """Exact log p(y_{1:T} | theta) for the AR(1) plus noise model."""
    theta = params.as_array() if isinstance(params, Ar1Params) else params
    return _run(theta, y).loglik


def kalman_score_info(params, y):
    """Exact score vector and observed information matrix.

    Returns ``(score, obs_info)`` with ``obs_info`` the negative Hessian of
    the log-likelihood (symmetrized against roundoff).
    """
    theta = params.as_array() if isinstance(params, Ar1Params) else params
    state = _run(theta, y)
    info = -state.d2loglik
    return state.dloglik.copy(), 0.5 * (info + info.T)


def kalman_score_trace(params, y):
    """Running exact score and observed-information diagonal per prefix.

    Row t-1 holds the score of y_{1:t} and the diagonal of its observed
    information; matches the trace schema of the particle estimators.
    """
    theta = params.as_array() if isinstance(params, Ar1Params) else params
    theta = as_theta_array(theta, 3)
    _validate(theta[0], theta[1], theta[2])
    y = np.asarray(y, dtype=float)
    T = y.size
    score_trace = np.empty((T, 3))
    info_diag = np.empty((T, 3))
    state = KalmanState()
    for t in range(T):
        state = kalman_step(state, y[t], theta)
        score_trace[t] = state.dloglik
        info_diag[t] = -np.diag(state.d2loglik)
    return score_trace, info_diag


def kalman_filter_moments(params, y):
    """Per-step filtering means/variances and the running score trace.

    Returns arrays ``(means, variances, score_trace)`` where row t-1 of
    ``score_trace`` is the score of y_{1:t}.
    """
    theta = params.as_array() if isinstance(params, Ar1Params) else params
    theta = as_theta_array(theta, 3)
    _validate(theta[0], theta[1], theta[2])
    y = np.asarray(y, dtype=float)
    T = y.size
    means = np.empty(T)
    variances = np.empty(T)
    score_trace = np.empty((T, 3))
    state = KalmanState()
    for t in range(T):
        state = kalman_step(state, y[t], theta)
        means[t] = state.mean
        variances[t] = state.var
        score_trace[t] = state.dloglik
    return means, variances, score_trace
