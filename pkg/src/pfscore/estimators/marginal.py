"""Marginal O(N^2) score/information estimator.

Instead of path statistics, each new particle averages the inherited
statistics of every previous particle, weighted by the previous weights times
the transition density into the new particle.  This removes the path
degeneracy at a cost quadratic in the number of particles.  Used here as a
low-variance baseline and reference oracle.
"""

from __future__ import annotations

import numpy as np

from ..filter import apf_init, apf_step, loglik_increment
from ..models.base import ModelSpec, as_theta_array
from .rb import ScoreRunResult, _quad


def poyiadjis_n2_run(
    model: ModelSpec, theta, y, n_particles: int, rng,
    with_info: bool = True, resampling: str = "multinomial", block: int = 256,
) -> ScoreRunResult:
    """Run the marginal estimator; cost O(N^2) per step.

    ``block`` bounds the number of new particles processed per pairwise
    batch, capping the (block, N, d, d) temporaries.
    """
    th = as_theta_array(theta, model.d)
    model.validate_theta(th)
    y = np.asarray(y, dtype=float)
    T = y.size
    d = model.d
    n = n_particles

    s_trace = np.zeros((T, d))
    i_diag = np.full((T, d), np.nan) if with_info else None

    ps = apf_init(model, th, y[0], n, rng)
    loglik = loglik_increment(ps.raw_logw)
    a = model.grad_log_obs(y[0], ps.x, 1, th) + model.grad_log_init(ps.x, th)
    b = None
    S = ps.w @ a
    I = None
    if with_info:
        hess = model.hess_log_obs(y[0], ps.x, 1, th) + model.hess_log_init(ps.x, th)
        b = a[:, :, None] * a[:, None, :] + hess
        I = np.outer(S, S) - np.einsum("i,iab->ab", ps.w, b)
        i_diag[0] = np.diag(I)
    s_trace[0] = S

    with np.errstate(divide="ignore"):
        for t in range(1, T):
            ps_new = apf_step(ps, model, th, y[t], rng, resampling=resampling)
            loglik += loglik_increment(ps_new.raw_logw)
            a_new = np.empty((n, d))
            b_new = np.empty((n, d, d)) if with_info else None
            go = model.grad_log_obs(y[t], ps_new.x, ps_new.t, th)
            ho = model.hess_log_obs(y[t], ps_new.x, ps_new.t, th) if with_info else None
            logw_prev = np.log(ps.w)
            for lo in range(0, n, block):
                hi = min(lo + block, n)
                xb = ps_new.x[lo:hi, None]
                lt = model.trans_logpdf(xb, ps.x[None, :], th)
                lw = logw_prev[None, :] + lt
                lw -= lw.max(axis=1, keepdims=True)
                wt = np.exp(lw)
                wt /= wt.sum(axis=1, keepdims=True)
                s = model.grad_log_trans(xb, ps.x[None, :], th) + go[lo:hi, None, :]
                a_new[lo:hi] = np.einsum("bn,nj->bj", wt, a) + np.einsum(
                    "bn,bnj->bj", wt, s
                )
                if with_info:
                    ht = model.hess_log_trans(xb, ps.x[None, :], th)
                    cross = np.einsum("bn,nj,bnk->bjk", wt, a, s)
                    b_new[lo:hi] = (
                        np.einsum("bn,njk->bjk", wt, b)
                        + cross
                        + cross.transpose(0, 2, 1)
                        + np.einsum("bn,bnj,bnk->bjk", wt, s, s)
                        + np.einsum("bn,bnjk->bjk", wt, ht)
                        + ho[lo:hi]
                    )
            a, b = a_new, b_new
            S = ps_new.w @ a
            if with_info:
                I = np.outer(S, S) - np.einsum("i,iab->ab", ps_new.w, b)
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
