"""Kernel-shrinkage Rao-Blackwellised score/information estimator (O(N)).

Each particle carries the mean ``m`` of a Gaussian representing its
cumulative first-derivative statistic and, when second-order output is
requested, the mean ``n`` of the matching second-derivative statistic.  At
every step the inherited means are shrunk towards the previous score estimate
by ``lam`` and the shared spread ``V`` is grown by the weighted scatter of
the means, so the information estimate can subtract the variability removed
by shrinkage (the ``h2 = 1 - lam**2`` correction).

Setting ``lam = 1`` collapses the recursion to the plain path-space
estimator, which is also provided standalone (:func:`poyiadjis_n_run`) as a
baseline with its well-known variance growth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _engine
from ..filter import FilterDegeneracyError, apf_init, apf_step, loglik_increment
from ..models.base import ModelSpec, as_theta_array


@dataclass
class ScoreState:
    """Running state of the shrinkage estimator at time t."""

    m: np.ndarray  # (N, d) per-particle means of the first-derivative statistic
    S: np.ndarray  # (d,) score estimate
    lam: float
    h2: float
    t: int
    n: Optional[np.ndarray] = None  # (N, d, d) second-derivative means
    B: Optional[np.ndarray] = None  # (d, d) mean of n
    V: Optional[np.ndarray] = None  # (d, d) accumulated shrinkage covariance
    I: Optional[np.ndarray] = None  # (d, d) observed-information estimate

    @property
    def with_info(self) -> bool:
        return self.n is not None


@dataclass
class ScoreRunResult:
    """Full-series output of a score/information estimator."""

    score: np.ndarray  # (d,)
    info: Optional[np.ndarray]  # (d, d)
    score_trace: np.ndarray  # (T, d)
    info_diag_trace: Optional[np.ndarray]  # (T, d)
    loglik: float


def _quad(w, m, n):
    mm = m[:, :, None] * m[:, None, :]
    if n is not None:
        mm = mm + n
    q = np.einsum("i,iab->ab", w, mm)
    return 0.5 * (q + q.T)  # pin exact symmetry against reduction-order ulps


def _check_lam(lam):
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"shrinkage parameter must be in (0, 1], got {lam}")


def rb_init(ps, model: ModelSpec, theta, y1, lam: float, with_info: bool = True) -> ScoreState:
    """Time-1 state: the statistic is the initial-density plus observation gradient."""
    _check_lam(lam)
    th = as_theta_array(theta, model.d)
    h2 = 1.0 - lam * lam
    m = model.grad_log_obs(y1, ps.x, 1, th) + model.grad_log_init(ps.x, th)
    S = ps.w @ m
    if not with_info:
        return ScoreState(m=m, S=S, lam=lam, h2=h2, t=1)
    n = model.hess_log_obs(y1, ps.x, 1, th) + model.hess_log_init(ps.x, th)
    B = np.einsum("i,iab->ab", ps.w, n)
    V = np.zeros((model.d, model.d))
    I = np.outer(S, S) - _quad(ps.w, m, n) - h2 * V
    return ScoreState(m=m, S=S, lam=lam, h2=h2, t=1, n=n, B=B, V=V, I=I)


def rb_step(ss: ScoreState, ps_prev, ps_new, model: ModelSpec, theta, y_t) -> ScoreState:
    """Advance the estimator across one filter transition.

    ``ps_new`` must have been produced by ``apf_step`` from ``ps_prev`` so
    that its ancestor indices refer to ``ps_prev``'s particles, and ``ss``
    must be the state formed alongside ``ps_prev``.
    """
    th = as_theta_array(theta, model.d)
    if ss.m.shape[1] != model.d:
        raise ValueError("score state dimension does not match the model")
    k = ps_new.ancestors
    lam, h2 = ss.lam, ss.h2

    incr = (
        model.grad_log_obs(y_t, ps_new.x, ps_new.t, th)
        + model.grad_log_trans(ps_new.x, ps_prev.x[k], th)
    )
    m = lam * ss.m[k] + (1.0 - lam) * ss.S + incr
    S = ps_new.w @ m
    if not ss.with_info:
        return ScoreState(m=m, S=S, lam=lam, h2=h2, t=ps_new.t)

    dm = ss.m - ss.S
    vinc = np.einsum("i,ia,ib->ab", ps_prev.w, dm, dm)
    V = ss.V + 0.5 * (vinc + vinc.T)
    hincr = (
        model.hess_log_obs(y_t, ps_new.x, ps_new.t, th)
        + model.hess_log_trans(ps_new.x, ps_prev.x[k], th)
    )
    n = lam * ss.n[k] + (1.0 - lam) * ss.B + hincr
    B = np.einsum("i,iab->ab", ps_new.w, n)
    I = np.outer(S, S) - _quad(ps_new.w, m, n) - h2 * V
    return ScoreState(m=m, S=S, lam=lam, h2=h2, t=ps_new.t, n=n, B=B, V=V, I=I)


def _select_engine(model: ModelSpec, engine: str, resampling: str) -> str:
    if engine == "auto":
        if model.fast_kernels is not None and resampling == "multinomial":
            return "fast"
        return "numpy"
    if engine not in ("numpy", "fast"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "fast" and model.fast_kernels is None:
        raise ValueError(f"model {model.name!r} ships no compiled kernels")
    return engine


def rb_run(
    model: ModelSpec, theta, y, n_particles: int, lam: float, rng,
    with_info: bool = True, engine: str = "auto", resampling: str = "multinomial",
) -> ScoreRunResult:
    """Run the shrinkage estimator over a whole series.

    ``engine="fast"`` uses the compiled per-model loop (independent RNG
    stream seeded from ``rng``); ``engine="numpy"`` uses the reference
    implementation.  ``"auto"`` picks the compiled loop when available.
    """
    _check_lam(lam)
    th = as_theta_array(theta, model.d)
    model.validate_theta(th)
    y = np.asarray(y, dtype=float)
    which = _select_engine(model, engine, resampling)
    if which == "fast":
        seed = _engine._seed32(rng)
        status, s_trace, i_diag, info, loglik = _engine.rb_fast(
            model.fast_kernels, y, th, n_particles, lam, seed, with_info
        )
        if status != 0:
            raise FilterDegeneracyError(
                "all particle weights vanished; the filter is degenerate"
            )
        if not with_info:
            return ScoreRunResult(s_trace[-1].copy(), None, s_trace, None, loglik)
        return ScoreRunResult(s_trace[-1].copy(), info, s_trace, i_diag, loglik)

    T = y.size
    s_trace = np.zeros((T, model.d))
    i_diag = np.full((T, model.d), np.nan) if with_info else None
    ps = apf_init(model, th, y[0], n_particles, rng)
    loglik = loglik_increment(ps.raw_logw)
    ss = rb_init(ps, model, th, y[0], lam, with_info)
    s_trace[0] = ss.S
    if with_info:
        i_diag[0] = np.diag(ss.I)
    for t in range(1, T):
        ps_new = apf_step(ps, model, th, y[t], rng, resampling=resampling)
        loglik += loglik_increment(ps_new.raw_logw)
        ss = rb_step(ss, ps, ps_new, model, th, y[t])
        ps = ps_new
        s_trace[t] = ss.S
        if with_info:
            i_diag[t] = np.diag(ss.I)
    return ScoreRunResult(
        score=ss.S.copy(),
        info=ss.I.copy() if with_info else None,
        score_trace=s_trace,
        info_diag_trace=i_diag,
        loglik=loglik,
    )


def poyiadjis_n_run(
    model: ModelSpec, theta, y, n_particles: int, rng,
    with_info: bool = True, engine: str = "auto", resampling: str = "multinomial",
) -> ScoreRunResult:
    """Path-space O(N) estimator: per-particle cumulative derivatives.

    Algebraically identical to :func:`rb_run` at ``lam = 1`` (and asserted so
    in the tests), but implemented independently as a plain path recursion.
    """
    th = as_theta_array(theta, model.d)
    model.validate_theta(th)
    y = np.asarray(y, dtype=float)
    which = _select_engine(model, engine, resampling)
    if which == "fast":
        seed = _engine._seed32(rng)
        status, s_trace, i_diag, info, loglik = _engine.pn_fast(
            model.fast_kernels, y, th, n_particles, seed, with_info
        )
        if status != 0:
            raise FilterDegeneracyError(
                "all particle weights vanished; the filter is degenerate"
            )
        if not with_info:
            return ScoreRunResult(s_trace[-1].copy(), None, s_trace, None, loglik)
        return ScoreRunResult(s_trace[-1].copy(), info, s_trace, i_diag, loglik)

    T = y.size
    s_trace = np.zeros((T, model.d))
    i_diag = np.full((T, model.d), np.nan) if with_info else None
    ps = apf_init(model, th, y[0], n_particles, rng)
    loglik = loglik_increment(ps.raw_logw)
    alpha = model.grad_log_obs(y[0], ps.x, 1, th) + model.grad_log_init(ps.x, th)
    beta = None
    S = ps.w @ alpha
    I = None
    if with_info:
        beta = model.hess_log_obs(y[0], ps.x, 1, th) + model.hess_log_init(ps.x, th)
        I = np.outer(S, S) - _quad(ps.w, alpha, beta)
        i_diag[0] = np.diag(I)
    s_trace[0] = S
    for t in range(1, T):
        ps_new = apf_step(ps, model, th, y[t], rng, resampling=resampling)
        loglik += loglik_increment(ps_new.raw_logw)
        k = ps_new.ancestors
        incr = (
            model.grad_log_obs(y[t], ps_new.x, ps_new.t, th)
            + model.grad_log_trans(ps_new.x, ps.x[k], th)
        )
        alpha = alpha[k] + incr
        S = ps_new.w @ alpha
        if with_info:
            hincr = (
                model.hess_log_obs(y[t], ps_new.x, ps_new.t, th)
                + model.hess_log_trans(ps_new.x, ps.x[k], th)
            )
            beta = beta[k] + hincr
            I = np.outer(S, S) - _quad(ps_new.w, alpha, beta)
            i_diag[t] = np.diag(I)
        ps = ps_new
        s_trace[t] = S
    return ScoreRunResult(
        score=S.copy(),
        info=I.copy() if with_info else None,
        score_trace=s_trace,
        info_diag_trace=i_diag,
        loglik=loglik,
    )
