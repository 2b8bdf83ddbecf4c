"""Auxiliary particle filter with pluggable proposals.

Every step resamples: ancestor indices are drawn multinomially from the
selection probabilities xi (previous weights times an optional lookahead
factor), particles are propagated through the proposal and reweighted in log
space.  The per-step draw order is fixed -- selection indices first, then one
vector of propagation noise, particle-major -- so independent estimators can
share a stream bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models.base import ModelSpec, as_theta_array


class FilterDegeneracyError(RuntimeError):
    """All particles received zero weight (observation impossible under all)."""


@dataclass
class ParticleSystem:
    """Weighted particles at one time step.

    ``raw_logw`` holds the unnormalized log incremental weights of the step
    that produced this system (selection normalization included), from which
    the likelihood increment is formed.
    """

    x: np.ndarray
    w: np.ndarray
    ancestors: np.ndarray
    t: int
    raw_logw: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _normalize_logw(logw):
    mx = np.max(logw)
    if not np.isfinite(mx):
        raise FilterDegeneracyError(
            "all particle weights vanished; the filter is degenerate"
        )
    w = np.exp(logw - mx)
    s = w.sum()
    return w / s, mx + np.log(s)


def multinomial_indices(rng, probs, n):
    """Draw n iid ancestor indices from ``probs`` by inverse CDF."""
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n), side="right").astype(np.int64)


def systematic_indices(rng, probs, n):
    """Systematic (single-uniform stratified) resampling indices."""
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    u = (np.arange(n) + rng.random()) / n
    return np.searchsorted(cum, u, side="right").astype(np.int64)


_RESAMPLERS = {"multinomial": multinomial_indices, "systematic": systematic_indices}


def apf_init(model: ModelSpec, theta, y1, n_particles: int, rng) -> ParticleSystem:
    """Time-1 initialization: sample from the prior, weight by the observation.

    A single particle is permitted (every recursion degenerates to one path);
    real use wants N much larger.
    """
    if n_particles < 1:
        raise ValueError("need at least 1 particle")
    th = as_theta_array(theta, model.d)
    x = model.init_sample(rng, n_particles, th)
    logg = np.asarray(model.obs_logpdf(y1, x, 1, th), dtype=float)
    w, _ = _normalize_logw(logg)
    return ParticleSystem(
        x=x, w=w, ancestors=np.arange(n_particles, dtype=np.int64), t=1,
        raw_logw=logg,
    )


def apf_step(
    ps: ParticleSystem, model: ModelSpec, theta, y_t, rng,
    resampling: str = "multinomial",
) -> ParticleSystem:
    """One auxiliary-filter transition from time t-1 to t."""
    th = as_theta_array(theta, model.d)
    t = ps.t + 1
    n = ps.n
    resampler = _RESAMPLERS[resampling]

    if model.proposal is None:
        log_look = np.zeros(n)
    else:
        log_look = np.asarray(
            model.proposal.log_lookahead(ps.x, y_t, t, th), dtype=float
        )
    with np.errstate(divide="ignore"):
        logxi = np.log(ps.w) + log_look
    xi, log_zxi = _normalize_logw(logxi)

    k = resampler(rng, xi, n)
    x_anc = ps.x[k]
    if model.proposal is None:
        x_new = model.trans_sample(rng, x_anc, th)
        logq = model.trans_logpdf(x_new, x_anc, th)
    else:
        x_new = model.proposal.sample(rng, x_anc, y_t, t, th)
        logq = model.proposal.logpdf(x_new, x_anc, y_t, t, th)

    raw_logw = (
        log_zxi
        + np.asarray(model.obs_logpdf(y_t, x_new, t, th), dtype=float)
        + np.asarray(model.trans_logpdf(x_new, x_anc, th), dtype=float)
        - log_look[k]
        - np.asarray(logq, dtype=float)
    )
    w, _ = _normalize_logw(raw_logw)
    return ParticleSystem(x=x_new, w=w, ancestors=k, t=t, raw_logw=raw_logw)


def loglik_increment(raw_logw) -> float:
    """SMC estimate of log p(y_t | y_{1:t-1}, theta) from raw step weights."""
    raw_logw = np.asarray(raw_logw, dtype=float)
    mx = np.max(raw_logw)
    if not np.isfinite(mx):
        return -np.inf
    return mx + np.log(np.exp(raw_logw - mx).sum()) - np.log(raw_logw.size)


def run_filter(
    model: ModelSpec, theta, y, n_particles: int, rng,
    resampling: str = "multinomial",
):
    """Run the filter over a whole series; yields the system at each time."""
    y = np.asarray(y, dtype=float)
    ps = apf_init(model, theta, y[0], n_particles, rng)
    yield ps
    for t in range(1, y.size):
        ps = apf_step(ps, model, theta, y[t], rng, resampling=resampling)
        yield ps
