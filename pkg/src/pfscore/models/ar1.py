"""Linear-Gaussian AR(1) plus noise model.

State:        x_1 ~ N(0, sigma^2 / (1 - phi^2)),  x_t | x_{t-1} ~ N(phi x_{t-1}, sigma^2)
Observation:  y_t | x_t ~ N(x_t, tau^2)

Parameter vector theta = (phi, sigma, tau).  The locally optimal proposal
q(x_t | x_{t-1}, y_t) and its lookahead weights are available in closed form
and are attached by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .._engine import FastKernels
from .base import ModelSpec, Proposal

PARAM_NAMES = ("phi", "sigma", "tau")
DEFAULT_TRANSFORMS = ("artanh", "log", "log")

_LOG2PI = math.log(2.0 * math.pi)

PHI_MAX = 0.999
SCALE_FLOOR = 1e-3  # floor on sigma, tau (variance floor 1e-6)


@dataclass(frozen=True)
class Ar1Params:
    """Parameters of the AR(1) plus noise model."""

    phi: float
    sigma: float
    tau: float

    def __post_init__(self):
        _validate(self.phi, self.sigma, self.tau)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.sigma, self.tau], dtype=float)


def _validate(phi, sigma, tau):
    if not np.isfinite([phi, sigma, tau]).all():
        raise ValueError("AR(1) parameters must be finite")
    if abs(phi) >= 1:
        raise ValueError(f"|phi| must be < 1 for a stationary prior, got {phi}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")


def _validate_theta(theta):
    _validate(theta[0], theta[1], theta[2])


def _project_theta(theta):
    out = np.array(theta, dtype=float)
    out[0] = min(max(out[0], -PHI_MAX), PHI_MAX)
    out[1] = max(out[1], SCALE_FLOOR)
    out[2] = max(out[2], SCALE_FLOOR)
    return out


def _prior_var_partials(phi, sigma):
    """Stationary prior variance v = sigma^2/(1-phi^2) with dv and d2v in theta."""
    c = 1.0 - phi * phi
    v = sigma * sigma / c
    dv = np.array([2.0 * phi * v / c, 2.0 * v / sigma, 0.0])
    d2v = np.zeros((3, 3))
    d2v[0, 0] = 2.0 * v / c + 8.0 * phi * phi * v / (c * c)
    d2v[0, 1] = d2v[1, 0] = 4.0 * phi * v / (sigma * c)
    d2v[1, 1] = 2.0 * v / (sigma * sigma)
    return v, dv, d2v


def _init_logpdf(x, theta):
    phi, sigma, _ = theta
    v = sigma * sigma / (1.0 - phi * phi)
    return -0.5 * (_LOG2PI + np.log(v)) - np.square(x) / (2.0 * v)


def _init_sample(rng, n, theta):
    phi, sigma, _ = theta
    v = sigma * sigma / (1.0 - phi * phi)
    return math.sqrt(v) * rng.standard_normal(n)


def _grad_log_init(x, theta):
    x = np.asarray(x, dtype=float)
    v, dv, _ = _prior_var_partials(theta[0], theta[1])
    # d/dv of log N(x | 0, v), then chain rule through v(phi, sigma)
    dl_dv = -0.5 / v + np.square(x) / (2.0 * v * v)
    return dl_dv[..., None] * dv


def _hess_log_init(x, theta):
    x = np.asarray(x, dtype=float)
    v, dv, d2v = _prior_var_partials(theta[0], theta[1])
    x2 = np.square(x)
    dl_dv = -0.5 / v + x2 / (2.0 * v * v)
    d2l_dv2 = 0.5 / (v * v) - x2 / (v * v * v)
    outer = np.outer(dv, dv)
    return d2l_dv2[..., None, None] * outer + dl_dv[..., None, None] * d2v


def _trans_logpdf(x, x_prev, theta):
    phi, sigma, _ = theta
    r = x - phi * x_prev
    return -0.5 * _LOG2PI - np.log(sigma) - np.square(r) / (2.0 * sigma * sigma)


def _trans_sample(rng, x_prev, theta):
    phi, sigma, _ = theta
    x_prev = np.asarray(x_prev, dtype=float)
    return phi * x_prev + sigma * rng.standard_normal(x_prev.shape)


def _grad_log_trans(x, x_prev, theta):
    phi, sigma, _ = theta
    r = np.asarray(x - phi * x_prev, dtype=float)
    g = np.zeros(r.shape + (3,))
    g[..., 0] = r * x_prev / (sigma * sigma)
    g[..., 1] = -1.0 / sigma + np.square(r) / sigma**3
    return g


def _hess_log_trans(x, x_prev, theta):
    phi, sigma, _ = theta
    r = np.asarray(x - phi * x_prev, dtype=float)
    s2 = sigma * sigma
    h = np.zeros(r.shape + (3, 3))
    h[..., 0, 0] = -np.square(np.asarray(x_prev, dtype=float)) / s2
    h[..., 0, 1] = h[..., 1, 0] = -2.0 * r * x_prev / sigma**3
    h[..., 1, 1] = 1.0 / s2 - 3.0 * np.square(r) / (s2 * s2)
    return h


def _obs_logpdf(y, x, t, theta):
    tau = theta[2]
    e = y - np.asarray(x, dtype=float)
    return -0.5 * _LOG2PI - np.log(tau) - np.square(e) / (2.0 * tau * tau)


def _obs_sample(rng, x, t, theta):
    tau = theta[2]
    x = np.asarray(x, dtype=float)
    return x + tau * rng.standard_normal(x.shape)


def _grad_log_obs(y, x, t, theta):
    tau = theta[2]
    e = np.asarray(y - x, dtype=float)
    g = np.zeros(e.shape + (3,))
    g[..., 2] = -1.0 / tau + np.square(e) / tau**3
    return g


def _hess_log_obs(y, x, t, theta):
    tau = theta[2]
    e = np.asarray(y - x, dtype=float)
    t2 = tau * tau
    h = np.zeros(e.shape + (3, 3))
    h[..., 2, 2] = 1.0 / t2 - 3.0 * np.square(e) / (t2 * t2)
    return h


# --- locally optimal proposal (closed form for the linear-Gaussian pair) ----

def _prop_moments(x_prev, y, theta):
    phi, sigma, tau = theta
    s2, t2 = sigma * sigma, tau * tau
    mean = (phi * np.asarray(x_prev, dtype=float) * t2 + y * s2) / (s2 + t2)
    var = s2 * t2 / (s2 + t2)
    return mean, var


def _prop_sample(rng, x_prev, y, t, theta):
    mean, var = _prop_moments(x_prev, y, theta)
    return mean + math.sqrt(var) * rng.standard_normal(mean.shape)


def _prop_logpdf(x, x_prev, y, t, theta):
    mean, var = _prop_moments(x_prev, y, theta)
    return -0.5 * (_LOG2PI + math.log(var)) - np.square(x - mean) / (2.0 * var)


def _log_lookahead(x_prev, y, t, theta):
    phi, sigma, tau = theta
    v = sigma * sigma + tau * tau
    e = y - phi * np.asarray(x_prev, dtype=float)
    return -0.5 * (_LOG2PI + math.log(v)) - np.square(e) / (2.0 * v)


OPTIMAL_PROPOSAL = Proposal(
    sample=_prop_sample, logpdf=_prop_logpdf, log_lookahead=_log_lookahead
)


# --- numba kernels for the fast engine ---------------------------------------

@njit(cache=True)
def _k_init_draw(theta):
    phi, sigma = theta[0], theta[1]
    return math.sqrt(sigma * sigma / (1.0 - phi * phi)) * np.random.normal()


@njit(cache=True)
def _k_grad_init(x, theta, out):
    phi, sigma = theta[0], theta[1]
    c = 1.0 - phi * phi
    v = sigma * sigma / c
    dl_dv = -0.5 / v + x * x / (2.0 * v * v)
    out[0] = dl_dv * 2.0 * phi * v / c
    out[1] = dl_dv * 2.0 * v / sigma
    out[2] = 0.0


@njit(cache=True)
def _k_hess_init(x, theta, out):
    phi, sigma = theta[0], theta[1]
    c = 1.0 - phi * phi
    v = sigma * sigma / c
    x2 = x * x
    dl_dv = -0.5 / v + x2 / (2.0 * v * v)
    d2l = 0.5 / (v * v) - x2 / (v * v * v)
    dv0 = 2.0 * phi * v / c
    dv1 = 2.0 * v / sigma
    out[:, :] = 0.0
    out[0, 0] = d2l * dv0 * dv0 + dl_dv * (2.0 * v / c + 8.0 * phi * phi * v / (c * c))
    out[0, 1] = d2l * dv0 * dv1 + dl_dv * 4.0 * phi * v / (sigma * c)
    out[1, 0] = out[0, 1]
    out[1, 1] = d2l * dv1 * dv1 + dl_dv * 2.0 * v / (sigma * sigma)


@njit(cache=True)
def _k_trans_draw(xp, theta):
    return theta[0] * xp + theta[1] * np.random.normal()


@njit(cache=True)
def _k_trans_logpdf(x, xp, theta):
    phi, sigma = theta[0], theta[1]
    r = x - phi * xp
    return -0.5 * _LOG2PI - math.log(sigma) - r * r / (2.0 * sigma * sigma)


@njit(cache=True)
def _k_grad_trans(x, xp, theta, out):
    phi, sigma = theta[0], theta[1]
    r = x - phi * xp
    out[0] = r * xp / (sigma * sigma)
    out[1] = -1.0 / sigma + r * r / (sigma ** 3)
    out[2] = 0.0


@njit(cache=True)
def _k_hess_trans(x, xp, theta, out):
    phi, sigma = theta[0], theta[1]
    r = x - phi * xp
    s2 = sigma * sigma
    out[:, :] = 0.0
    out[0, 0] = -xp * xp / s2
    out[0, 1] = -2.0 * r * xp / (sigma * s2)
    out[1, 0] = out[0, 1]
    out[1, 1] = 1.0 / s2 - 3.0 * r * r / (s2 * s2)


@njit(cache=True)
def _k_obs_logpdf(y, x, t, theta):
    tau = theta[2]
    e = y - x
    return -0.5 * _LOG2PI - math.log(tau) - e * e / (2.0 * tau * tau)


@njit(cache=True)
def _k_grad_obs(y, x, t, theta, out):
    tau = theta[2]
    e = y - x
    out[0] = 0.0
    out[1] = 0.0
    out[2] = -1.0 / tau + e * e / (tau ** 3)


@njit(cache=True)
def _k_hess_obs(y, x, t, theta, out):
    tau = theta[2]
    e = y - x
    t2 = tau * tau
    out[:, :] = 0.0
    out[2, 2] = 1.0 / t2 - 3.0 * e * e / (t2 * t2)


@njit(cache=True)
def _k_prop_draw(xp, y, t, theta):
    phi, sigma, tau = theta[0], theta[1], theta[2]
    s2, t2 = sigma * sigma, tau * tau
    m = (phi * xp * t2 + y * s2) / (s2 + t2)
    return m + math.sqrt(s2 * t2 / (s2 + t2)) * np.random.normal()


@njit(cache=True)
def _k_prop_logpdf(x, xp, y, t, theta):
    phi, sigma, tau = theta[0], theta[1], theta[2]
    s2, t2 = sigma * sigma, tau * tau
    m = (phi * xp * t2 + y * s2) / (s2 + t2)
    v = s2 * t2 / (s2 + t2)
    return -0.5 * (_LOG2PI + math.log(v)) - (x - m) * (x - m) / (2.0 * v)


@njit(cache=True)
def _k_lookahead(xp, y, t, theta):
    phi, sigma, tau = theta[0], theta[1], theta[2]
    v = sigma * sigma + tau * tau
    e = y - phi * xp
    return -0.5 * (_LOG2PI + math.log(v)) - e * e / (2.0 * v)


@njit(cache=True)
def _k_boot_draw(xp, y, t, theta):
    return theta[0] * xp + theta[1] * np.random.normal()


@njit(cache=True)
def _k_boot_logpdf(x, xp, y, t, theta):
    return _k_trans_logpdf(x, xp, theta)


@njit(cache=True)
def _k_boot_lookahead(xp, y, t, theta):
    return 0.0


@njit(cache=True)
def _k_project(theta):
    if theta[0] > PHI_MAX:
        theta[0] = PHI_MAX
    elif theta[0] < -PHI_MAX:
        theta[0] = -PHI_MAX
    if theta[1] < SCALE_FLOOR:
        theta[1] = SCALE_FLOOR
    if theta[2] < SCALE_FLOOR:
        theta[2] = SCALE_FLOOR


_KERNELS_OPTIMAL = FastKernels(
    init_draw=_k_init_draw,
    grad_init=_k_grad_init,
    hess_init=_k_hess_init,
    trans_draw=_k_trans_draw,
    trans_logpdf=_k_trans_logpdf,
    grad_trans=_k_grad_trans,
    hess_trans=_k_hess_trans,
    obs_logpdf=_k_obs_logpdf,
    grad_obs=_k_grad_obs,
    hess_obs=_k_hess_obs,
    prop_draw=_k_prop_draw,
    prop_logpdf=_k_prop_logpdf,
    lookahead=_k_lookahead,
    project=_k_project,
)

_KERNELS_BOOTSTRAP = _KERNELS_OPTIMAL._replace(
    prop_draw=_k_boot_draw,
    prop_logpdf=_k_boot_logpdf,
    lookahead=_k_boot_lookahead,
)


def ar1_model(params: Ar1Params, proposal: str = "optimal") -> ModelSpec:
    """Build the AR(1) plus noise ModelSpec.

    Parameters
    ----------
    params : Ar1Params
        Validated model parameters (used for validation and as the default
        point; every callable still takes theta explicitly).
    proposal : str
        "optimal" attaches the closed-form locally optimal proposal with its
        lookahead weights; "bootstrap" leaves the proposal empty so the filter
        falls back to propagating from the transition density.
    """
    _validate(params.phi, params.sigma, params.tau)
    if proposal not in ("optimal", "bootstrap"):
        raise ValueError(f"unknown proposal {proposal!r}")
    use_opt = proposal == "optimal"
    return ModelSpec(
        name="ar1",
        d=3,
        param_names=PARAM_NAMES,
        init_logpdf=_init_logpdf,
        init_sample=_init_sample,
        trans_logpdf=_trans_logpdf,
        trans_sample=_trans_sample,
        obs_logpdf=_obs_logpdf,
        obs_sample=_obs_sample,
        grad_log_init=_grad_log_init,
        hess_log_init=_hess_log_init,
        grad_log_trans=_grad_log_trans,
        hess_log_trans=_hess_log_trans,
        grad_log_obs=_grad_log_obs,
        hess_log_obs=_hess_log_obs,
        validate_theta=_validate_theta,
        project_theta=_project_theta,
        proposal=OPTIMAL_PROPOSAL if use_opt else None,
        default_transforms=DEFAULT_TRANSFORMS,
        obs_format="real",
        fast_kernels=_KERNELS_OPTIMAL if use_opt else _KERNELS_BOOTSTRAP,
    )
