"""Compiled single-pass loops for the O(N) score/information estimators.

The numpy implementations in :mod:`pfscore.filter` and
:mod:`pfscore.estimators` define the semantics; the loops here are
drop-in fast paths for models that ship a :class:`FastKernels` bundle of
scalar numba kernels.  They follow the same per-step draw order (selection
indices first, then propagation noise, particle-major) but consume an
independent deterministic stream seeded from a 32-bit integer, so results
are reproducible per path rather than across paths.

Status codes: 0 = ok, 1 = degenerate weights (all particles at -inf).
"""

from __future__ import annotations

import math
from typing import NamedTuple, Callable

import numpy as np
from numba import njit


class FastKernels(NamedTuple):
    """Scalar model kernels consumed by the compiled loops.

    All log-density kernels mirror the ModelSpec callables but act on
    scalars; gradient/hessian kernels write into caller-owned buffers.
    ``project`` clips a parameter vector back into the admissible set in
    place (used by the recursive-MLE loop).
    """

    init_draw: Callable  # (theta) -> x
    grad_init: Callable  # (x, theta, out[d])
    hess_init: Callable  # (x, theta, out[d,d])
    trans_draw: Callable  # (xp, theta) -> x
    trans_logpdf: Callable  # (x, xp, theta) -> float
    grad_trans: Callable  # (x, xp, theta, out[d])
    hess_trans: Callable  # (x, xp, theta, out[d,d])
    obs_logpdf: Callable  # (y, x, t, theta) -> float
    grad_obs: Callable  # (y, x, t, theta, out[d])
    hess_obs: Callable  # (y, x, t, theta, out[d,d])
    prop_draw: Callable  # (xp, y, t, theta) -> x
    prop_logpdf: Callable  # (x, xp, y, t, theta) -> float
    lookahead: Callable  # (xp, y, t, theta) -> log xi factor
    project: Callable  # (theta) in place


_LOG_ZERO = -1.0e308


@njit(cache=True)
def _multinomial_ordered(w, idx):
    """O(N) multinomial index draw via ordered uniform spacings."""
    n = w.shape[0]
    c = 0.0
    spac = np.empty(n + 1)
    for i in range(n + 1):
        c += -math.log(1.0 - np.random.random())
        spac[i] = c
    tot = spac[n]
    cw = 0.0
    j = 0
    for i in range(n):
        cw += w[i]
        bound = cw * tot
        while j < n and spac[j] <= bound:
            idx[j] = i
            j += 1
    while j < n:
        idx[j] = n - 1
        j += 1


@njit(cache=True)
def _normalize_log(logw, w):
    """Exponentiate-and-normalize with max subtraction.

    Returns log(sum exp(logw)) or -inf when every entry underflows.
    """
    n = logw.shape[0]
    mx = logw[0]
    for i in range(1, n):
        if logw[i] > mx:
            mx = logw[i]
    if mx <= _LOG_ZERO or math.isnan(mx):
        return -np.inf
    s = 0.0
    for i in range(n):
        w[i] = math.exp(logw[i] - mx)
        s += w[i]
    for i in range(n):
        w[i] /= s
    return mx + math.log(s)


@njit(cache=True)
def _init_step(init_draw, obs_logpdf, y1, theta, x, logw, w):
    n = x.shape[0]
    for i in range(n):
        x[i] = init_draw(theta)
    for i in range(n):
        logw[i] = obs_logpdf(y1, x[i], 1, theta)
    lse = _normalize_log(logw, w)
    if lse == -np.inf:
        return 1, 0.0
    return 0, lse - math.log(n)


@njit(cache=True)
def _filter_step(
    trans_logpdf, obs_logpdf, prop_draw, prop_logpdf, lookahead,
    y_t, t, theta, x, w, xn, la, logxi, idx, logw,
):
    """One auxiliary-filter step: select, propagate, reweight.

    Overwrites ``w`` with the new normalized weights and fills ``xn`` and
    ``idx``; ``x`` (previous states) is left untouched.  Returns
    (status, log-likelihood increment).
    """
    n = x.shape[0]
    for i in range(n):
        la[i] = lookahead(x[i], y_t, t, theta)
        logxi[i] = math.log(w[i]) if w[i] > 0.0 else -np.inf
        logxi[i] += la[i]
    log_zxi = _normalize_log(logxi, w)  # w now holds the selection probs
    if log_zxi == -np.inf:
        return 1, 0.0
    _multinomial_ordered(w, idx)
    for i in range(n):
        xn[i] = prop_draw(x[idx[i]], y_t, t, theta)
    for i in range(n):
        k = idx[i]
        logw[i] = (
            log_zxi
            + obs_logpdf(y_t, xn[i], t, theta)
            + trans_logpdf(xn[i], x[k], theta)
            - la[k]
            - prop_logpdf(xn[i], x[k], y_t, t, theta)
        )
    lse = _normalize_log(logw, w)
    if lse == -np.inf:
        return 1, 0.0
    return 0, lse - math.log(n)


@njit(cache=True)
def _reduce_score(w, m, S):
    n, d = m.shape
    for j in range(d):
        S[j] = 0.0
    for i in range(n):
        for j in range(d):
            S[j] += w[i] * m[i, j]


@njit(cache=True)
def _reduce_info(w, m, n_, S, B, V, h2, I):
    """I = S S^T - sum_i w_i (m_i m_i^T + n_i) - h2 V; B = sum_i w_i n_i."""
    n, d = m.shape
    for a in range(d):
        for b in range(d):
            B[a, b] = 0.0
            q = 0.0
            for i in range(n):
                q += w[i] * (m[i, a] * m[i, b] + n_[i, a, b])
                B[a, b] += w[i] * n_[i, a, b]
            I[a, b] = S[a] * S[b] - q - h2 * V[a, b]


@njit(cache=True)
def _accumulate_v(w, m, S, V):
    n, d = m.shape
    for i in range(n):
        wi = w[i]
        for a in range(d):
            da = m[i, a] - S[a]
            for b in range(d):
                V[a, b] += wi * da * (m[i, b] - S[b])


@njit(cache=True)
def _rb_loop(
    init_draw, grad_init, hess_init, trans_logpdf, grad_trans, hess_trans,
    obs_logpdf, grad_obs, hess_obs, prop_draw, prop_logpdf, lookahead,
    y, theta, n_particles, lam, seed, with_info,
):
    np.random.seed(seed)
    T = y.shape[0]
    d = theta.shape[0]
    N = n_particles
    h2 = 1.0 - lam * lam
    x = np.empty(N)
    xn = np.empty(N)
    w = np.empty(N)
    logw = np.empty(N)
    la = np.empty(N)
    logxi = np.empty(N)
    idx = np.empty(N, np.int64)
    m = np.zeros((N, d))
    mn = np.zeros((N, d))
    nmat = np.zeros((N, d, d))
    nmat_new = np.zeros((N, d, d))
    g1 = np.empty(d)
    g2 = np.empty(d)
    h1 = np.empty((d, d))
    hh2 = np.empty((d, d))
    S = np.zeros(d)
    B = np.zeros((d, d))
    V = np.zeros((d, d))
    I = np.zeros((d, d))
    S_trace = np.zeros((T, d))
    I_diag = np.full((T, d), np.nan)
    loglik = 0.0

    status, inc = _init_step(init_draw, obs_logpdf, y[0], theta, x, logw, w)
    if status != 0:
        return 1, S_trace, I_diag, I, 0.0
    loglik += inc
    for i in range(N):
        grad_obs(y[0], x[i], 1, theta, g1)
        grad_init(x[i], theta, g2)
        for j in range(d):
            m[i, j] = g1[j] + g2[j]
        if with_info:
            hess_obs(y[0], x[i], 1, theta, h1)
            hess_init(x[i], theta, hh2)
            for a in range(d):
                for b in range(d):
                    nmat[i, a, b] = h1[a, b] + hh2[a, b]
    _reduce_score(w, m, S)
    if with_info:
        _reduce_info(w, m, nmat, S, B, V, h2, I)
        for j in range(d):
            I_diag[0, j] = I[j, j]
    for j in range(d):
        S_trace[0, j] = S[j]

    for t in range(2, T + 1):
        if with_info:
            _accumulate_v(w, m, S, V)
        status, inc = _filter_step(
            trans_logpdf, obs_logpdf, prop_draw, prop_logpdf, lookahead,
            y[t - 1], t, theta, x, w, xn, la, logxi, idx, logw,
        )
        if status != 0:
            return 1, S_trace, I_diag, I, loglik
        loglik += inc
        for i in range(N):
            k = idx[i]
            grad_obs(y[t - 1], xn[i], t, theta, g1)
            grad_trans(xn[i], x[k], theta, g2)
            for j in range(d):
                mn[i, j] = lam * m[k, j] + (1.0 - lam) * S[j] + (g1[j] + g2[j])
            if with_info:
                hess_obs(y[t - 1], xn[i], t, theta, h1)
                hess_trans(xn[i], x[k], theta, hh2)
                for a in range(d):
                    for b in range(d):
                        nmat_new[i, a, b] = (
                            lam * nmat[k, a, b] + (1.0 - lam) * B[a, b]
                            + (h1[a, b] + hh2[a, b])
                        )
        x, xn = xn, x
        m, mn = mn, m
        nmat, nmat_new = nmat_new, nmat
        _reduce_score(w, m, S)
        if with_info:
            _reduce_info(w, m, nmat, S, B, V, h2, I)
            for j in range(d):
                I_diag[t - 1, j] = I[j, j]
        for j in range(d):
            S_trace[t - 1, j] = S[j]
    return 0, S_trace, I_diag, I, loglik


@njit(cache=True)
def _pn_loop(
    init_draw, grad_init, hess_init, trans_logpdf, grad_trans, hess_trans,
    obs_logpdf, grad_obs, hess_obs, prop_draw, prop_logpdf, lookahead,
    y, theta, n_particles, seed, with_info,
):
    """Path-space O(N) recursion: per-particle cumulative derivatives."""
    np.random.seed(seed)
    T = y.shape[0]
    d = theta.shape[0]
    N = n_particles
    x = np.empty(N)
    xn = np.empty(N)
    w = np.empty(N)
    logw = np.empty(N)
    la = np.empty(N)
    logxi = np.empty(N)
    idx = np.empty(N, np.int64)
    m = np.zeros((N, d))
    mn = np.zeros((N, d))
    nmat = np.zeros((N, d, d))
    nmat_new = np.zeros((N, d, d))
    g1 = np.empty(d)
    g2 = np.empty(d)
    h1 = np.empty((d, d))
    hh2 = np.empty((d, d))
    S = np.zeros(d)
    B = np.zeros((d, d))
    V0 = np.zeros((d, d))
    I = np.zeros((d, d))
    S_trace = np.zeros((T, d))
    I_diag = np.full((T, d), np.nan)
    loglik = 0.0

    status, inc = _init_step(init_draw, obs_logpdf, y[0], theta, x, logw, w)
    if status != 0:
        return 1, S_trace, I_diag, I, 0.0
    loglik += inc
    for i in range(N):
        grad_obs(y[0], x[i], 1, theta, g1)
        grad_init(x[i], theta, g2)
        for j in range(d):
            m[i, j] = g1[j] + g2[j]
        if with_info:
            hess_obs(y[0], x[i], 1, theta, h1)
            hess_init(x[i], theta, hh2)
            for a in range(d):
                for b in range(d):
                    nmat[i, a, b] = h1[a, b] + hh2[a, b]
    _reduce_score(w, m, S)
    if with_info:
        _reduce_info(w, m, nmat, S, B, V0, 0.0, I)
        for j in range(d):
            I_diag[0, j] = I[j, j]
    for j in range(d):
        S_trace[0, j] = S[j]

    for t in range(2, T + 1):
        status, inc = _filter_step(
            trans_logpdf, obs_logpdf, prop_draw, prop_logpdf, lookahead,
            y[t - 1], t, theta, x, w, xn, la, logxi, idx, logw,
        )
        if status != 0:
            return 1, S_trace, I_diag, I, loglik
        loglik += inc
        for i in range(N):
            k = idx[i]
            grad_obs(y[t - 1], xn[i], t, theta, g1)
            grad_trans(xn[i], x[k], theta, g2)
            for j in range(d):
                mn[i, j] = m[k, j] + (g1[j] + g2[j])
            if with_info:
                hess_obs(y[t - 1], xn[i], t, theta, h1)
                hess_trans(xn[i], x[k], theta, hh2)
                for a in range(d):
                    for b in range(d):
                        nmat_new[i, a, b] = nmat[k, a, b] + (h1[a, b] + hh2[a, b])
        x, xn = xn, x
        m, mn = mn, m
        nmat, nmat_new = nmat_new, nmat
        _reduce_score(w, m, S)
        if with_info:
            _reduce_info(w, m, nmat, S, B, V0, 0.0, I)
            for j in range(d):
                I_diag[t - 1, j] = I[j, j]
        for j in range(d):
            S_trace[t - 1, j] = S[j]
    return 0, S_trace, I_diag, I, loglik


@njit(cache=True)
def _recursive_loop(
    init_draw, grad_init, trans_logpdf, grad_trans,
    obs_logpdf, grad_obs, prop_draw, prop_logpdf, lookahead, project,
    y, theta0, n_particles, lam, seed,
    power_schedule, alpha, scale, coord_scale,
):
    """Online gradient ascent: one filter pass, theta updated after each step."""
    np.random.seed(seed)
    T = y.shape[0]
    d = theta0.shape[0]
    N = n_particles
    theta = theta0.copy()
    x = np.empty(N)
    xn = np.empty(N)
    w = np.empty(N)
    logw = np.empty(N)
    la = np.empty(N)
    logxi = np.empty(N)
    idx = np.empty(N, np.int64)
    m = np.zeros((N, d))
    mn = np.zeros((N, d))
    g1 = np.empty(d)
    g2 = np.empty(d)
    S = np.zeros(d)
    S_prev = np.zeros(d)
    theta_trace = np.zeros((T, d))
    S_trace = np.zeros((T, d))

    status, _ = _init_step(init_draw, obs_logpdf, y[0], theta, x, logw, w)
    if status != 0:
        return 1, theta_trace, S_trace
    for i in range(N):
        grad_obs(y[0], x[i], 1, theta, g1)
        grad_init(x[i], theta, g2)
        for j in range(d):
            m[i, j] = g1[j] + g2[j]
    _reduce_score(w, m, S)
    gam = scale * (1.0 ** (-alpha)) if power_schedule else scale
    for j in range(d):
        S_trace[0, j] = S[j]
        theta[j] = theta[j] + gam * coord_scale[j] * (S[j] - S_prev[j])
    project(theta)
    for j in range(d):
        theta_trace[0, j] = theta[j]
        S_prev[j] = S[j]

    for t in range(2, T + 1):
        status, _ = _filter_step(
            trans_logpdf, obs_logpdf, prop_draw, prop_logpdf, lookahead,
            y[t - 1], t, theta, x, w, xn, la, logxi, idx, logw,
        )
        if status != 0:
            return 1, theta_trace, S_trace
        for i in range(N):
            k = idx[i]
            grad_obs(y[t - 1], xn[i], t, theta, g1)
            grad_trans(xn[i], x[k], theta, g2)
            for j in range(d):
                mn[i, j] = lam * m[k, j] + (1.0 - lam) * S[j] + (g1[j] + g2[j])
        x, xn = xn, x
        m, mn = mn, m
        _reduce_score(w, m, S)
        gam = scale * (float(t) ** (-alpha)) if power_schedule else scale
        for j in range(d):
            S_trace[t - 1, j] = S[j]
            theta[j] = theta[j] + gam * coord_scale[j] * (S[j] - S_prev[j])
        project(theta)
        for j in range(d):
            theta_trace[t - 1, j] = theta[j]
            S_prev[j] = S[j]
    return 0, theta_trace, S_trace


def _seed32(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


def rb_fast(kernels: FastKernels, y, theta, n_particles, lam, seed, with_info):
    k = kernels
    return _rb_loop(
        k.init_draw, k.grad_init, k.hess_init, k.trans_logpdf, k.grad_trans,
        k.hess_trans, k.obs_logpdf, k.grad_obs, k.hess_obs, k.prop_draw,
        k.prop_logpdf, k.lookahead,
        np.asarray(y, dtype=float), np.asarray(theta, dtype=float),
        int(n_particles), float(lam), int(seed) & 0xFFFFFFFF, bool(with_info),
    )


def pn_fast(kernels: FastKernels, y, theta, n_particles, seed, with_info):
    k = kernels
    return _pn_loop(
        k.init_draw, k.grad_init, k.hess_init, k.trans_logpdf, k.grad_trans,
        k.hess_trans, k.obs_logpdf, k.grad_obs, k.hess_obs, k.prop_draw,
        k.prop_logpdf, k.lookahead,
        np.asarray(y, dtype=float), np.asarray(theta, dtype=float),
        int(n_particles), int(seed) & 0xFFFFFFFF, bool(with_info),
    )


def recursive_fast(kernels: FastKernels, y, theta0, n_particles, lam, seed,
                   power_schedule, alpha, scale, coord_scale):
    k = kernels
    return _recursive_loop(
        k.init_draw, k.grad_init, k.trans_logpdf, k.grad_trans,
        k.obs_logpdf, k.grad_obs, k.prop_draw, k.prop_logpdf, k.lookahead,
        k.project,
        np.asarray(y, dtype=float), np.asarray(theta0, dtype=float),
        int(n_particles), float(lam), int(seed) & 0xFFFFFFFF,
        bool(power_schedule), float(alpha), float(scale),
        np.asarray(coord_scale, dtype=float),
    )
