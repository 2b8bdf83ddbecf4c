"""Nonlinear seasonal Poisson count model for the monthly polio series.

Observation:  y_t | x_t ~ Poisson(exp(x_t + z_t))
Regression:   z_t = mu1 + mu2 t/1000 + mu3 cos(2 pi t/12) + mu4 sin(2 pi t/12)
                       + mu5 cos(2 pi t/6) + mu6 sin(2 pi t/6)
State:        x_t | x_{t-1} ~ N(phi x_{t-1}, sigma2),  x_1 stationary

Parameter vector theta = (mu1..mu6, phi, sigma2), d = 8.  Note the last
coordinate is the state variance itself, not its square root.  The default
proposal is the bootstrap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numba import njit
from scipy.special import gammaln

from .._engine import FastKernels
from .base import ModelSpec

PARAM_NAMES = ("mu1", "mu2", "mu3", "mu4", "mu5", "mu6", "phi", "sigma2")
DEFAULT_TRANSFORMS = (
    "identity", "identity", "identity", "identity", "identity", "identity",
    "artanh", "log",
)

_LOG2PI = math.log(2.0 * math.pi)

PHI_MAX = 0.999
VAR_FLOOR = 1e-6
_N_REG = 6


@dataclass(frozen=True)
class PolioParams:
    """Parameters of the seasonal Poisson model: 6 regression terms, phi, sigma2."""

    mu: tuple
    phi: float
    sigma2: float

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        object.__setattr__(self, "mu", mu)
        if len(mu) != _N_REG:
            raise ValueError(f"mu must have {_N_REG} components")
        _validate_theta(self.as_array())

    def as_array(self) -> np.ndarray:
        return np.array(list(self.mu) + [self.phi, self.sigma2], dtype=float)


def _validate_theta(theta):
    if not np.all(np.isfinite(theta)):
        raise ValueError("polio parameters must be finite")
    phi, sigma2 = theta[6], theta[7]
    if abs(phi) >= 1:
        raise ValueError(f"|phi| must be < 1, got {phi}")
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")


def _project_theta(theta):
    out = np.array(theta, dtype=float)
    out[6] = min(max(out[6], -PHI_MAX), PHI_MAX)
    out[7] = max(out[7], VAR_FLOOR)
    return out


def regressors(t) -> np.ndarray:
    """Deterministic regressor vector for (1-based) month index t."""
    t = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * t / 12.0
    return np.stack(
        [np.ones_like(t), t / 1000.0,
         np.cos(w), np.sin(w), np.cos(2.0 * w), np.sin(2.0 * w)],
        axis=-1,
    )


def seasonal_predictor(t, theta) -> np.ndarray:
    """z_t, the deterministic part of the log rate."""
    return regressors(t) @ np.asarray(theta, dtype=float)[:_N_REG]


def _log_rate(x, t, theta):
    return np.asarray(x, dtype=float) + seasonal_predictor(t, theta)


def _obs_logpdf(y, x, t, theta):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("counts must be non-negative")
    lr = _log_rate(x, t, theta)
    return y * lr - np.exp(lr) - gammaln(y + 1.0)


def _obs_sample(rng, x, t, theta):
    return rng.poisson(np.exp(_log_rate(x, t, theta)))


def _grad_log_obs(y, x, t, theta):
    lr = _log_rate(x, t, theta)
    resid = np.asarray(y, dtype=float) - np.exp(lr)
    g = np.zeros(resid.shape + (8,))
    g[..., :_N_REG] = resid[..., None] * regressors(t)
    return g


def _hess_log_obs(y, x, t, theta):
    lr = _log_rate(x, t, theta)
    rate = np.exp(lr)
    r = regressors(t)
    h = np.zeros(np.shape(rate) + (8, 8))
    h[..., :_N_REG, :_N_REG] = -rate[..., None, None] * (
        r[..., :, None] * r[..., None, :]
    )
    return h


def _trans_logpdf(x, x_prev, theta):
    phi, sigma2 = theta[6], theta[7]
    r = x - phi * x_prev
    return -0.5 * (_LOG2PI + np.log(sigma2)) - np.square(r) / (2.0 * sigma2)


def _trans_sample(rng, x_prev, theta):
    phi, sigma2 = theta[6], theta[7]
    x_prev = np.asarray(x_prev, dtype=float)
    return phi * x_prev + math.sqrt(sigma2) * rng.standard_normal(x_prev.shape)


def _grad_log_trans(x, x_prev, theta):
    phi, sigma2 = theta[6], theta[7]
    r = np.asarray(x - phi * x_prev, dtype=float)
    g = np.zeros(r.shape + (8,))
    g[..., 6] = r * x_prev / sigma2
    g[..., 7] = -0.5 / sigma2 + np.square(r) / (2.0 * sigma2 * sigma2)
    return g


def _hess_log_trans(x, x_prev, theta):
    phi, sigma2 = theta[6], theta[7]
    r = np.asarray(x - phi * x_prev, dtype=float)
    s4 = sigma2 * sigma2
    h = np.zeros(r.shape + (8, 8))
    h[..., 6, 6] = -np.square(np.asarray(x_prev, dtype=float)) / sigma2
    h[..., 6, 7] = h[..., 7, 6] = -r * x_prev / s4
    h[..., 7, 7] = 0.5 / s4 - np.square(r) / (s4 * sigma2)
    return h


def _prior_var_partials(phi, sigma2):
    """Stationary variance v = sigma2/(1-phi^2) with dv, d2v in (phi, sigma2)."""
    c = 1.0 - phi * phi
    v = sigma2 / c
    dv = np.zeros(8)
    dv[6] = 2.0 * phi * v / c
    dv[7] = 1.0 / c
    d2v = np.zeros((8, 8))
    d2v[6, 6] = 2.0 * v / c + 8.0 * phi * phi * v / (c * c)
    d2v[6, 7] = d2v[7, 6] = 2.0 * phi / (c * c)
    return v, dv, d2v


def _init_logpdf(x, theta):
    phi, sigma2 = theta[6], theta[7]
    v = sigma2 / (1.0 - phi * phi)
    return -0.5 * (_LOG2PI + np.log(v)) - np.square(x) / (2.0 * v)


def _init_sample(rng, n, theta):
    phi, sigma2 = theta[6], theta[7]
    v = sigma2 / (1.0 - phi * phi)
    return math.sqrt(v) * rng.standard_normal(n)


def _grad_log_init(x, theta):
    x = np.asarray(x, dtype=float)
    v, dv, _ = _prior_var_partials(theta[6], theta[7])
    dl_dv = -0.5 / v + np.square(x) / (2.0 * v * v)
    return dl_dv[..., None] * dv


def _hess_log_init(x, theta):
    x = np.asarray(x, dtype=float)
    v, dv, d2v = _prior_var_partials(theta[6], theta[7])
    x2 = np.square(x)
    dl_dv = -0.5 / v + x2 / (2.0 * v * v)
    d2l_dv2 = 0.5 / (v * v) - x2 / (v * v * v)
    return d2l_dv2[..., None, None] * np.outer(dv, dv) + dl_dv[..., None, None] * d2v


# --- numba kernels ------------------------------------------------------------

@njit(cache=True)
def _k_regressors(t, out):
    w = 2.0 * math.pi * t / 12.0
    out[0] = 1.0
    out[1] = t / 1000.0
    out[2] = math.cos(w)
    out[3] = math.sin(w)
    out[4] = math.cos(2.0 * w)
    out[5] = math.sin(2.0 * w)


@njit(cache=True)
def _k_log_rate(x, t, theta):
    w = 2.0 * math.pi * t / 12.0
    z = (theta[0] + theta[1] * t / 1000.0 + theta[2] * math.cos(w)
         + theta[3] * math.sin(w) + theta[4] * math.cos(2.0 * w)
         + theta[5] * math.sin(2.0 * w))
    return x + z


@njit(cache=True)
def _k_init_draw(theta):
    phi, sigma2 = theta[6], theta[7]
    return math.sqrt(sigma2 / (1.0 - phi * phi)) * np.random.normal()


@njit(cache=True)
def _k_grad_init(x, theta, out):
    phi, sigma2 = theta[6], theta[7]
    c = 1.0 - phi * phi
    v = sigma2 / c
    dl_dv = -0.5 / v + x * x / (2.0 * v * v)
    out[:] = 0.0
    out[6] = dl_dv * 2.0 * phi * v / c
    out[7] = dl_dv / c


@njit(cache=True)
def _k_hess_init(x, theta, out):
    phi, sigma2 = theta[6], theta[7]
    c = 1.0 - phi * phi
    v = sigma2 / c
    x2 = x * x
    dl_dv = -0.5 / v + x2 / (2.0 * v * v)
    d2l = 0.5 / (v * v) - x2 / (v * v * v)
    dv6 = 2.0 * phi * v / c
    dv7 = 1.0 / c
    out[:, :] = 0.0
    out[6, 6] = d2l * dv6 * dv6 + dl_dv * (2.0 * v / c + 8.0 * phi * phi * v / (c * c))
    out[6, 7] = d2l * dv6 * dv7 + dl_dv * 2.0 * phi / (c * c)
    out[7, 6] = out[6, 7]
    out[7, 7] = d2l * dv7 * dv7


@njit(cache=True)
def _k_trans_draw(xp, theta):
    return theta[6] * xp + math.sqrt(theta[7]) * np.random.normal()


@njit(cache=True)
def _k_trans_logpdf(x, xp, theta):
    phi, sigma2 = theta[6], theta[7]
    r = x - phi * xp
    return -0.5 * (_LOG2PI + math.log(sigma2)) - r * r / (2.0 * sigma2)


@njit(cache=True)
def _k_grad_trans(x, xp, theta, out):
    phi, sigma2 = theta[6], theta[7]
    r = x - phi * xp
    out[:] = 0.0
    out[6] = r * xp / sigma2
    out[7] = -0.5 / sigma2 + r * r / (2.0 * sigma2 * sigma2)


@njit(cache=True)
def _k_hess_trans(x, xp, theta, out):
    phi, sigma2 = theta[6], theta[7]
    r = x - phi * xp
    s4 = sigma2 * sigma2
    out[:, :] = 0.0
    out[6, 6] = -xp * xp / sigma2
    out[6, 7] = -r * xp / s4
    out[7, 6] = out[6, 7]
    out[7, 7] = 0.5 / s4 - r * r / (s4 * sigma2)


@njit(cache=True)
def _k_obs_logpdf(y, x, t, theta):
    lr = _k_log_rate(x, t, theta)
    return y * lr - math.exp(lr) - math.lgamma(y + 1.0)


@njit(cache=True)
def _k_grad_obs(y, x, t, theta, out):
    lr = _k_log_rate(x, t, theta)
    resid = y - math.exp(lr)
    _k_regressors(t, out[:_N_REG])
    for j in range(_N_REG):
        out[j] *= resid
    out[6] = 0.0
    out[7] = 0.0


@njit(cache=True)
def _k_hess_obs(y, x, t, theta, out):
    lr = _k_log_rate(x, t, theta)
    rate = math.exp(lr)
    reg = np.empty(_N_REG)
    _k_regressors(t, reg)
    out[:, :] = 0.0
    for a in range(_N_REG):
        for b in range(_N_REG):
            out[a, b] = -rate * reg[a] * reg[b]


@njit(cache=True)
def _k_prop_draw(xp, y, t, theta):
    return _k_trans_draw(xp, theta)


@njit(cache=True)
def _k_prop_logpdf(x, xp, y, t, theta):
    return _k_trans_logpdf(x, xp, theta)


@njit(cache=True)
def _k_lookahead(xp, y, t, theta):
    return 0.0


@njit(cache=True)
def _k_project(theta):
    if theta[6] > PHI_MAX:
        theta[6] = PHI_MAX
    elif theta[6] < -PHI_MAX:
        theta[6] = -PHI_MAX
    if theta[7] < VAR_FLOOR:
        theta[7] = VAR_FLOOR


_KERNELS = FastKernels(
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


def polio_model(params: PolioParams) -> ModelSpec:
    """Build the seasonal Poisson ModelSpec (bootstrap proposal)."""
    _validate_theta(params.as_array())
    return ModelSpec(
        name="polio",
        d=8,
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
        proposal=None,
        default_transforms=DEFAULT_TRANSFORMS,
        obs_format="count",
        fast_kernels=_KERNELS,
    )


EXPECTED_LENGTH = 168


def load_polio_csv(path=None) -> np.ndarray:
    """Load the monthly polio counts (columns ``t,count``, t = 1..168).

    With no path, reads the copy shipped with the package.
    """
    if path is None:
        ref = resources.files("pfscore") / "data" / "polio.csv"
        with ref.open("r") as f:
            rows = list(csv.DictReader(f))
    else:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    if rows and ("t" not in rows[0] or "count" not in rows[0]):
        raise ValueError("polio CSV must have header 't,count'")
    if len(rows) != EXPECTED_LENGTH:
        raise ValueError(f"expected {EXPECTED_LENGTH} rows, got {len(rows)}")
    counts = np.empty(EXPECTED_LENGTH)
    for i, row in enumerate(rows):
        if int(row["t"]) != i + 1:
            raise ValueError(f"row {i}: time index {row['t']} out of order")
        c = float(row["count"])
        if c < 0 or c != int(c):
            raise ValueError(f"row {i}: count must be a non-negative integer")
        counts[i] = c
    return counts
